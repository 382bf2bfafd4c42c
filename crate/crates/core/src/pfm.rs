//! Greyscale portable float maps (`Pf`).

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Little-endian `Pf` bytes with rows stored bottom to top. The header
/// scale is `-|scale|`.
pub fn write_pfm(map: &Tensor<f32>, scale: f64) -> Result<Vec<u8>> {
    if map.rank() != 2 {
        return Err(Error::shape(format!("PFM needs a [H,W] map, got {:?}", map.shape())));
    }
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let scale = -scale.abs();
    let mut out = format!("Pf\n{w} {h}\n{scale:?}\n").into_bytes();
    out.reserve(4 * h * w);
    for y in (0..h).rev() {
        for v in &map.data()[y * w..(y + 1) * w] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a `Pf` map and its header scale.
pub fn read_pfm(bytes: &[u8]) -> Result<(Tensor<f32>, f64)> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("PFM header truncated"));
        }
        let t = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        Ok(t)
    };
    match token()?.as_str() {
        "Pf" => {}
        "PF" => return Err(Error::format("color PFM unsupported")),
        m => return Err(Error::format(format!("bad PFM magic `{m}`"))),
    }
    let num = |t: String, what: &str| -> Result<usize> {
        t.parse().map_err(|_| Error::format(format!("bad PFM {what} `{t}`")))
    };
    let w = num(token()?, "width")?;
    let h = num(token()?, "height")?;
    if w == 0 || h == 0 {
        return Err(Error::format(format!("PFM dimensions {w}x{h} must be non-zero")));
    }
    let st = token()?;
    let scale: f64 = st.parse().map_err(|_| Error::format(format!("bad PFM scale `{st}`")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(format!("bad PFM scale `{st}`")));
    }
    // Exactly one whitespace byte separates the header from the samples.
    let payload = &bytes[(pos + 1).min(bytes.len())..];
    let need = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format("PFM dimensions overflow"))?;
    if payload.len() < need {
        return Err(Error::format(format!(
            "PFM payload truncated: need {need} bytes, have {}",
            payload.len()
        )));
    }
    let little = scale < 0.0;
    let mut data = vec![0f32; w * h];
    for (i, chunk) in payload[..need].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (row, x) = (i / w, i % w);
        data[(h - 1 - row) * w + x] = v;
    }
    Ok((Tensor::new(&[h, w], data)?, scale))
}

pub fn save_pfm(path: impl AsRef<Path>, map: &Tensor<f32>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_pfm(map, 1.0)?).map_err(|e| Error::io(path, e))
}

pub fn load_pfm(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(read_pfm(&bytes)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_layout() {
        let m = Tensor::new(&[1, 1], vec![3.5f32]).unwrap();
        let mut want = b"Pf\n1 1\n-1.0\n".to_vec();
        want.extend_from_slice(&3.5f32.to_le_bytes());
        assert_eq!(write_pfm(&m, 1.0).unwrap(), want);
    }

    #[test]
    fn big_endian_input_is_accepted() {
        let mut b = b"Pf\n2 1\n1.0\n".to_vec();
        b.extend_from_slice(&1.5f32.to_be_bytes());
        b.extend_from_slice(&(-2.0f32).to_be_bytes());
        let (m, s) = read_pfm(&b).unwrap();
        assert_eq!(m.data(), &[1.5, -2.0]);
        assert_eq!(s, 1.0);
    }
}
