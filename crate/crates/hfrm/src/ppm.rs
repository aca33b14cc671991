//! Binary PPM (P6) images with 8-bit samples.

use std::fs;
use std::path::Path;

use hfrm_core::Tensor;

use crate::error::{io_err, Error, Result};

/// Encodes a `[3, H, W]` tensor, clamping to `[0, 1]` and rounding to 8 bits.
pub fn encode(img: &Tensor) -> Result<Vec<u8>> {
    let (h, w) = match *img.shape() {
        [3, h, w] => (h, w),
        _ => return Err(Error::Data(format!("PPM needs a [3, H, W] image, got {:?}", img.shape()))),
    };
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let n = h * w;
    out.reserve(3 * n);
    for i in 0..n {
        for c in 0..3 {
            let v = img.data()[c * n + i].clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    Ok(out)
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Data("truncated PPM header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = header_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Data(format!("bad PPM {what} {:?}", String::from_utf8_lossy(tok))))
}

/// Decodes a P6 image with maxval 255 into `[3, H, W]` values in `[0, 1]`.
pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0;
    if header_token(bytes, &mut pos)? != b"P6" {
        return Err(Error::Data("not a binary PPM (P6) image".into()));
    }
    let w = header_number(bytes, &mut pos, "width")?;
    let h = header_number(bytes, &mut pos, "height")?;
    let max = header_number(bytes, &mut pos, "maxval")?;
    if max != 255 {
        return Err(Error::Data(format!("unsupported PPM maxval {max}")));
    }
    pos += 1;
    let n = h * w;
    let body = bytes.get(pos..pos + 3 * n).ok_or_else(|| Error::Data("truncated PPM pixel data".into()))?;
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        for c in 0..3 {
            data[c * n + i] = body[3 * i + c] as f64 / 255.0;
        }
    }
    Ok(Tensor::new(&[3, h, w], data)?)
}

pub fn read(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        e => e,
    })
}

pub fn write(path: &Path, img: &Tensor) -> Result<()> {
    fs::write(path, encode(img)?).map_err(io_err(path))
}

/// Rounds an image to the 8-bit grid a PPM round trip produces.
pub fn quantize(img: &Tensor) -> Tensor {
    img.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}
