//! On-disk formats.
//!
//! A field stack is a JSON header plus a raw payload of
//! `n·width·height` little-endian `f64`, observation-major, each observation
//! row-major. The payload sits next to the header with extension `.bin`
//! unless the header names it in an optional `"data"` entry.
//!
//! Masks are written as 8-bit grayscale PNG (0 / 255) or as CSV with header
//! `row,col,value` and one line per pixel.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FieldStack, Lattice, Mask};
use crate::error::{Error, Result};

pub const OVERLAY_LOWER: [u8; 3] = [0x1f, 0x4f, 0xff];
pub const OVERLAY_POINT: [u8; 3] = [0xff, 0xd7, 0x00];
pub const OVERLAY_UPPER: [u8; 3] = [0xe0, 0x20, 0x20];
const OVERLAY_BACKGROUND: [u8; 3] = [0xff, 0xff, 0xff];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackHeader {
    pub width: usize,
    pub height: usize,
    pub n: usize,
    pub dtype: String,
    pub order: String,
    pub endianness: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
}

impl StackHeader {
    pub fn for_stack(stack: &FieldStack) -> Self {
        Self {
            width: stack.lattice().width(),
            height: stack.lattice().height(),
            n: stack.n(),
            dtype: "f64".into(),
            order: "row-major".into(),
            endianness: "little".into(),
            data: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str, got: &str, want: &str| {
            Err(Error::Format(format!(
                "header {what} is {got:?}, only {want:?} is supported"
            )))
        };
        if self.dtype != "f64" {
            return bad("dtype", &self.dtype, "f64");
        }
        if self.order != "row-major" {
            return bad("order", &self.order, "row-major");
        }
        if self.endianness != "little" {
            return bad("endianness", &self.endianness, "little");
        }
        Ok(())
    }
}

/// Where the payload of the stack described by `header_path` lives.
pub fn payload_path(header_path: &Path, header: &StackHeader) -> PathBuf {
    match &header.data {
        Some(name) => header_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(name),
        None => header_path.with_extension("bin"),
    }
}

/// Writes `<path>` (JSON header) and `<path>.bin` (payload).
pub fn save_field_stack(path: impl AsRef<Path>, stack: &FieldStack) -> Result<()> {
    let path = path.as_ref();
    let header = StackHeader::for_stack(stack);
    std::fs::write(path, serde_json::to_vec_pretty(&header)?)?;
    let mut out = BufWriter::new(File::create(payload_path(path, &header))?);
    for v in stack.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_field_stack(path: impl AsRef<Path>) -> Result<FieldStack> {
    let path = path.as_ref();
    let header: StackHeader = serde_json::from_reader(BufReader::new(open(path)?))?;
    header.validate()?;
    let lattice = Lattice::new(header.width, header.height)?;
    let expected = header
        .n
        .checked_mul(lattice.len())
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;

    let payload = payload_path(path, &header);
    let mut bytes = Vec::with_capacity(expected);
    open(&payload)?.read_to_end(&mut bytes)?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload {} has {} bytes, header declares n={} x {}x{} f64 = {} bytes",
            payload.display(),
            bytes.len(),
            header.n,
            header.width,
            header.height,
            expected
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    FieldStack::new(lattice, header.n, values)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Saves by extension: `.png` or `.csv`.
pub fn save_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_deref() {
        Some("png") => save_mask_png(path, mask),
        Some("csv") => save_mask_csv(path, mask),
        _ => Err(Error::InvalidParameter(format!(
            "mask path {} must end in .png or .csv",
            path.display()
        ))),
    }
}

pub fn save_mask_png(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    let data: Vec<u8> = mask
        .bits()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    write_png(
        path.as_ref(),
        mask.lattice(),
        png::ColorType::Grayscale,
        &data,
    )
}

pub fn save_mask_csv(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_mask_csv(&mut out, mask)?;
    out.flush()?;
    Ok(())
}

pub fn write_mask_csv(out: &mut impl Write, mask: &Mask) -> Result<()> {
    writeln!(out, "row,col,value")?;
    let lat = mask.lattice();
    for row in 0..lat.height() {
        for col in 0..lat.width() {
            writeln!(out, "{row},{col},{}", u8::from(mask.get(row, col)))?;
        }
    }
    Ok(())
}

/// Loads a mask written by [`save_mask`]. PNG pixels are set when nonzero;
/// CSV lattices are sized from the largest row and column present.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    match extension(path).as_deref() {
        Some("png") => load_mask_png(path),
        Some("csv") => load_mask_csv(path),
        _ => Err(Error::InvalidParameter(format!(
            "mask path {} must end in .png or .csv",
            path.display()
        ))),
    }
}

fn load_mask_csv(path: &Path) -> Result<Mask> {
    let mut entries = Vec::new();
    let (mut max_row, mut max_col) = (0usize, 0usize);
    for (lineno, line) in BufReader::new(open(path)?).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("row")) {
            continue;
        }
        let parse = || -> Option<(usize, usize, bool)> {
            let mut it = line.split(',').map(str::trim);
            let row = it.next()?.parse().ok()?;
            let col = it.next()?.parse().ok()?;
            let value: u8 = it.next()?.parse().ok()?;
            (value <= 1 && it.next().is_none()).then_some((row, col, value == 1))
        };
        let (row, col, v) = parse().ok_or_else(|| {
            Error::Format(format!(
                "{}:{}: expected row,col,0|1",
                path.display(),
                lineno + 1
            ))
        })?;
        max_row = max_row.max(row);
        max_col = max_col.max(col);
        entries.push((row, col, v));
    }
    let lattice = Lattice::new(max_col + 1, max_row + 1)?;
    if entries.len() != lattice.len() {
        return Err(Error::Format(format!(
            "{}: {} rows for a {}x{} mask",
            path.display(),
            entries.len(),
            lattice.width(),
            lattice.height()
        )));
    }
    let mut bits = vec![false; lattice.len()];
    for (row, col, v) in entries {
        bits[lattice.index(row, col)] = v;
    }
    Mask::new(lattice, bits)
}

fn load_mask_png(path: &Path) -> Result<Mask> {
    let decoder = png::Decoder::new(BufReader::new(open(path)?));
    let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Png(e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "{}: mask PNG must be 8-bit grayscale",
            path.display()
        )));
    }
    let lattice = Lattice::new(info.width as usize, info.height as usize)?;
    let bits = buf[..lattice.len()].iter().map(|&b| b != 0).collect();
    Mask::new(lattice, bits)
}

/// Renders `lower`, `point` and `upper` as a colour overlay; later layers
/// paint over earlier ones.
pub fn save_overlay_png(
    path: impl AsRef<Path>,
    upper: &Mask,
    point: &Mask,
    lower: &Mask,
) -> Result<()> {
    let lattice = lower.lattice();
    if upper.lattice() != lattice || point.lattice() != lattice {
        return Err(Error::Configuration("overlay masks differ in size".into()));
    }
    let mut rgb = Vec::with_capacity(3 * lattice.len());
    for i in 0..lattice.len() {
        let colour = if upper.contains(i) {
            OVERLAY_UPPER
        } else if point.contains(i) {
            OVERLAY_POINT
        } else if lower.contains(i) {
            OVERLAY_LOWER
        } else {
            OVERLAY_BACKGROUND
        };
        rgb.extend_from_slice(&colour);
    }
    write_png(path.as_ref(), lattice, png::ColorType::Rgb, &rgb)
}

fn write_png(path: &Path, lattice: Lattice, colour: png::ColorType, data: &[u8]) -> Result<()> {
    let out = BufWriter::new(File::create(path)?);
    let mut encoder = png::Encoder::new(out, lattice.width() as u32, lattice.height() as u32);
    encoder.set_color(colour);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Png(e.to_string()))?;
    writer
        .write_image_data(data)
        .map_err(|e| Error::Png(e.to_string()))?;
    writer.finish().map_err(|e| Error::Png(e.to_string()))?;
    Ok(())
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(w: usize, h: usize, n: usize) -> FieldStack {
        let lat = Lattice::new(w, h).unwrap();
        let values = (0..n * lat.len())
            .map(|i| ((i as f64) * 0.731).sin() * 1e3 + 1.0 / (i as f64 + 3.0))
            .collect();
        FieldStack::new(lat, n, values).unwrap()
    }

    #[test]
    fn stack_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.json");
        let s = stack(100, 100, 40);
        save_field_stack(&path, &s).unwrap();
        let back = load_field_stack(&path).unwrap();
        assert_eq!(back.n(), 40);
        assert!(s
            .values()
            .iter()
            .zip(back.values())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn header_uses_documented_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.json");
        save_field_stack(&path, &stack(3, 2, 2)).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        assert_eq!(v["width"], 3);
        assert_eq!(v["height"], 2);
        assert_eq!(v["n"], 2);
        assert_eq!(v["dtype"], "f64");
        assert_eq!(v["order"], "row-major");
        assert_eq!(v["endianness"], "little");
        assert_eq!(
            std::fs::metadata(dir.path().join("y.bin")).unwrap().len(),
            3 * 2 * 2 * 8
        );
    }

    #[test]
    fn short_payload_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.json");
        save_field_stack(&path, &stack(3, 3, 2)).unwrap();
        // keep one observation of the declared two
        let bin = dir.path().join("y.bin");
        let bytes = std::fs::read(&bin).unwrap();
        std::fs::write(&bin, &bytes[..9 * 8]).unwrap();
        assert!(matches!(load_field_stack(&path), Err(Error::Format(_))));
    }

    #[test]
    fn nan_payload_names_the_pixel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.json");
        save_field_stack(&path, &stack(3, 3, 2)).unwrap();
        let bin = dir.path().join("y.bin");
        let mut bytes = std::fs::read(&bin).unwrap();
        bytes[13 * 8..14 * 8].copy_from_slice(&f64::NAN.to_le_bytes());
        std::fs::write(&bin, &bytes).unwrap();
        let err = load_field_stack(&path).unwrap_err();
        assert!(
            matches!(
                err,
                Error::NonFinite {
                    pixel: 4,
                    observation: 1
                }
            ),
            "{err}"
        );
        assert!(err.to_string().contains("pixel 4"));
    }

    #[test]
    fn header_can_name_payload() {
        let dir = tempfile::tempdir().unwrap();
        let s = stack(2, 2, 2);
        save_field_stack(dir.path().join("a.json"), &s).unwrap();
        std::fs::rename(dir.path().join("a.bin"), dir.path().join("payload.raw")).unwrap();
        let mut header: StackHeader =
            serde_json::from_slice(&std::fs::read(dir.path().join("a.json")).unwrap()).unwrap();
        header.data = Some("payload.raw".into());
        std::fs::write(
            dir.path().join("a.json"),
            serde_json::to_vec(&header).unwrap(),
        )
        .unwrap();
        assert_eq!(load_field_stack(dir.path().join("a.json")).unwrap(), s);
    }

    #[test]
    fn mask_csv_has_one_row_per_pixel() {
        let lat = Lattice::new(2, 2).unwrap();
        let m = Mask::new(lat, vec![true, false, false, true]).unwrap();
        let mut buf = Vec::new();
        write_mask_csv(&mut buf, &m).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "row,col,value\n0,0,1\n0,1,0\n1,0,0\n1,1,1\n"
        );
    }

    #[test]
    fn masks_round_trip_through_png_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let lat = Lattice::new(7, 5).unwrap();
        let m = Mask::new(lat, (0..35).map(|i| i % 3 == 0).collect()).unwrap();
        for name in ["m.png", "m.csv"] {
            let p = dir.path().join(name);
            save_mask(&p, &m).unwrap();
            assert_eq!(load_mask(&p).unwrap(), m);
        }
        assert!(save_mask(dir.path().join("m.txt"), &m).is_err());
    }

    #[test]
    fn overlay_uses_fixed_palette() {
        let dir = tempfile::tempdir().unwrap();
        let lat = Lattice::new(4, 1 + 1).unwrap();
        let lower = Mask::new(
            lat,
            vec![true, true, true, false, false, false, false, false],
        )
        .unwrap();
        let point = Mask::new(
            lat,
            vec![true, true, false, false, false, false, false, false],
        )
        .unwrap();
        let upper = Mask::new(
            lat,
            vec![true, false, false, false, false, false, false, false],
        )
        .unwrap();
        let p = dir.path().join("o.png");
        save_overlay_png(&p, &upper, &point, &lower).unwrap();
        let decoder = png::Decoder::new(BufReader::new(File::open(&p).unwrap()));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        reader.next_frame(&mut buf).unwrap();
        assert_eq!(&buf[0..3], &OVERLAY_UPPER);
        assert_eq!(&buf[3..6], &OVERLAY_POINT);
        assert_eq!(&buf[6..9], &OVERLAY_LOWER);
        assert_eq!(&buf[9..12], &[255, 255, 255]);
    }
}
