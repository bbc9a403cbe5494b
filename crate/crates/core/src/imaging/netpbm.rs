//! Minimal binary Netpbm codecs: P4 (bitmap), P5 (graymap) and P6 (pixmap).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Magic {
    P4,
    P5,
    P6,
}

pub(crate) struct Header {
    pub magic: Magic,
    pub width: usize,
    pub height: usize,
    /// 1 for P4.
    pub maxval: u32,
    pub data_offset: usize,
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub(crate) fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(malformed(path, "missing P magic"));
    }
    let magic = match bytes[1] {
        b'4' => Magic::P4,
        b'5' => Magic::P5,
        b'6' => Magic::P6,
        other => {
            return Err(malformed(
                path,
                format!("unsupported magic P{}", other as char),
            ))
        }
    };
    let fields = if magic == Magic::P4 { 2 } else { 3 };
    let mut pos = 2;
    let mut values = Vec::with_capacity(fields);
    while values.len() < fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' || b == b'\r' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(malformed(path, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(malformed(path, "expected a decimal number"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        let value: u64 = text
            .parse()
            .map_err(|_| malformed(path, format!("number out of range: {text}")))?;
        values.push(value);
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(malformed(path, "missing whitespace before raster")),
    }
    let width = values[0] as usize;
    let height = values[1] as usize;
    if width == 0 || height == 0 {
        return Err(malformed(path, "zero image dimension"));
    }
    let maxval = if magic == Magic::P4 {
        1
    } else {
        let m = values[2];
        if m == 0 || m > 65535 {
            return Err(malformed(path, format!("maxval {m} out of range")));
        }
        m as u32
    };
    Ok(Header {
        magic,
        width,
        height,
        maxval,
        data_offset: pos,
    })
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn raster<'a>(bytes: &'a [u8], header: &Header, len: usize, path: &Path) -> Result<&'a [u8]> {
    let data = &bytes[header.data_offset..];
    if data.len() < len {
        return Err(malformed(
            path,
            format!("raster truncated: need {len} bytes, have {}", data.len()),
        ));
    }
    Ok(&data[..len])
}

/// 8-bit RGB pixmap. Returns `(width, height, interleaved rgb bytes)`.
pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = read_file(path)?;
    let header = parse_header(&bytes, path)?;
    if header.magic != Magic::P6 {
        return Err(malformed(path, "expected P6"));
    }
    if header.maxval > 255 {
        return Err(Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            maxval: header.maxval,
        });
    }
    let len = header.width * header.height * 3;
    let data = raster(&bytes, &header, len, path)?;
    let data = if header.maxval == 255 {
        data.to_vec()
    } else {
        let scale = 255.0 / header.maxval as f64;
        data.iter()
            .map(|&v| (v as f64 * scale).round().min(255.0) as u8)
            .collect()
    };
    Ok((header.width, header.height, data))
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), width * height * 3);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    write_file(path, &encode_ppm(width, height, rgb))
}

/// 16-bit graymap, samples big-endian. 8-bit files are rejected.
pub fn read_pgm16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = read_file(path)?;
    let header = parse_header(&bytes, path)?;
    if header.magic != Magic::P5 {
        return Err(malformed(path, "expected P5"));
    }
    if header.maxval < 256 {
        return Err(Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            maxval: header.maxval,
        });
    }
    let len = header.width * header.height * 2;
    let data = raster(&bytes, &header, len, path)?;
    let values = data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((header.width, header.height, values))
}

pub fn encode_pgm16(width: usize, height: usize, values: &[u16]) -> Vec<u8> {
    assert_eq!(values.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(values.len() * 2);
    for v in values {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn write_pgm16(path: &Path, width: usize, height: usize, values: &[u16]) -> Result<()> {
    write_file(path, &encode_pgm16(width, height, values))
}

/// Bitmap, 1 = set. Rows are padded to whole bytes, MSB first.
pub fn read_pbm(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let bytes = read_file(path)?;
    let header = parse_header(&bytes, path)?;
    if header.magic != Magic::P4 {
        return Err(malformed(path, "expected P4"));
    }
    let row_bytes = header.width.div_ceil(8);
    let data = raster(&bytes, &header, row_bytes * header.height, path)?;
    let mut bits = Vec::with_capacity(header.width * header.height);
    for row in data.chunks_exact(row_bytes) {
        for x in 0..header.width {
            bits.push(row[x / 8] & (0x80 >> (x % 8)) != 0);
        }
    }
    Ok((header.width, header.height, bits))
}

pub fn encode_pbm(width: usize, height: usize, bits: &[bool]) -> Vec<u8> {
    assert_eq!(bits.len(), width * height);
    let row_bytes = width.div_ceil(8);
    let mut out = format!("P4\n{width} {height}\n").into_bytes();
    for row in bits.chunks_exact(width) {
        let mut packed = vec![0u8; row_bytes];
        for (x, &b) in row.iter().enumerate() {
            if b {
                packed[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend_from_slice(&packed);
    }
    out
}

pub fn write_pbm(path: &Path, width: usize, height: usize, bits: &[bool]) -> Result<()> {
    write_file(path, &encode_pbm(width, height, bits))
}
