//! Portable float map (PFM) reader and writer, single channel.
//!
//! Files are written little-endian (negative scale) with scanlines stored
//! bottom-to-top as the format prescribes; callers see top-to-bottom rows.

use std::io::{BufRead, Write};

use crate::error::{parse, Result};

/// Writes a grayscale PFM.
pub fn write_pfm<W: Write>(mut w: W, width: usize, height: usize, data: &[f32]) -> Result<()> {
    if data.len() != width * height {
        return crate::error::dimension(format!(
            "PFM payload has {} values, expected {}",
            data.len(),
            width * height
        ));
    }
    write!(w, "Pf\n{width} {height}\n-1.0\n")?;
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for row in (0..height).rev() {
        for v in &data[row * width..(row + 1) * width] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads a grayscale PFM, returning `(width, height, values)` with row 0 at
/// the top.
pub fn read_pfm<R: BufRead>(mut r: R) -> Result<(usize, usize, Vec<f32>)> {
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return parse("truncated PFM header");
        }
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    if tokens[0] != "Pf" {
        return parse(format!("unsupported PFM type {:?} (only single-channel 'Pf')", tokens[0]));
    }
    let width: usize = tokens[1].parse().map_err(|_| crate::Error::Parse("bad PFM width".into()))?;
    let height: usize = tokens[2].parse().map_err(|_| crate::Error::Parse("bad PFM height".into()))?;
    let scale: f64 = tokens[3].parse().map_err(|_| crate::Error::Parse("bad PFM scale".into()))?;
    if scale == 0.0 {
        return parse("PFM scale must be non-zero");
    }
    let little = scale < 0.0;
    let mut buf = vec![0u8; width * height * 4];
    r.read_exact(&mut buf)
        .map_err(|_| crate::Error::Parse("truncated PFM payload".into()))?;
    let mut data = vec![0f32; width * height];
    for (i, chunk) in buf.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let file_row = i / width;
        let col = i % width;
        data[(height - 1 - file_row) * width + col] = v;
    }
    Ok((width, height, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_with_nan() {
        let data = vec![1.0f32, 2.0, f32::NAN, 4.0, 5.5, -6.0];
        let mut buf = Vec::new();
        write_pfm(&mut buf, 3, 2, &data).unwrap();
        assert!(buf.starts_with(b"Pf\n3 2\n-1.0\n"));
        // bottom row first
        assert_eq!(&buf[12..16], &4.0f32.to_le_bytes());
        let (w, h, back) = read_pfm(&buf[..]).unwrap();
        assert_eq!((w, h), (3, 2));
        for (a, b) in data.iter().zip(&back) {
            assert!(a == b || (a.is_nan() && b.is_nan()));
        }
    }

    #[test]
    fn big_endian_and_errors() {
        let mut buf = b"Pf\n1 1\n1.0\n".to_vec();
        buf.extend_from_slice(&2.5f32.to_be_bytes());
        assert_eq!(read_pfm(&buf[..]).unwrap().2, vec![2.5]);
        assert!(read_pfm(&b"PF\n1 1\n-1.0\n\0\0\0\0"[..]).is_err());
        assert!(read_pfm(&b"Pf\n2 1\n-1.0\n\0\0\0\0"[..]).is_err());
        assert!(write_pfm(Vec::new(), 2, 2, &[0.0]).is_err());
    }
}
