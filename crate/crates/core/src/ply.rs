//! PLY point clouds: `x y z` as float32 with optional `red green blue` uchar.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

pub fn write_ply(cloud: &PointCloud, format: PlyFormat) -> Result<Vec<u8>> {
    if let Some(c) = &cloud.colors {
        if c.len() != cloud.points.len() {
            return Err(Error::shape(format!(
                "{} colours for {} points",
                c.len(),
                cloud.points.len()
            )));
        }
    }
    let mut out = Vec::new();
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut header = format!(
        "ply\nformat {fmt} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        cloud.points.len()
    );
    if cloud.colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str("end_header\n");
    out.extend_from_slice(header.as_bytes());
    for (i, p) in cloud.points.iter().enumerate() {
        let rgb = cloud.colors.as_ref().map(|c| c[i]);
        match format {
            PlyFormat::Ascii => {
                write!(out, "{} {} {}", p[0], p[1], p[2]).expect("vec write");
                if let Some([r, g, b]) = rgb {
                    write!(out, " {r} {g} {b}").expect("vec write");
                }
                out.push(b'\n');
            }
            PlyFormat::BinaryLittleEndian => {
                for c in p {
                    out.extend_from_slice(&c.to_le_bytes());
                }
                if let Some(rgb) = rgb {
                    out.extend_from_slice(&rgb);
                }
            }
        }
    }
    Ok(out)
}

/// Reads clouds in the layout produced by [`write_ply`].
pub fn read_ply(bytes: &[u8]) -> Result<PointCloud> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::format("PLY header has no end_header"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::format("PLY header is not UTF-8"))?;
    let body = &bytes[end + END.len()..];
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(Error::format("missing `ply` magic"));
    }
    let (mut format, mut count, mut props) = (None, None, Vec::new());
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
            ["format", other, _] => return Err(Error::format(format!("unsupported PLY format `{other}`"))),
            ["element", "vertex", n] => {
                count = Some(
                    n.parse::<usize>()
                        .map_err(|_| Error::format(format!("bad vertex count `{n}`")))?,
                )
            }
            ["element", other, ..] => return Err(Error::format(format!("unsupported PLY element `{other}`"))),
            ["property", ty, name] => props.push((ty.to_string(), name.to_string())),
            ["comment", ..] | [] => {}
            _ => return Err(Error::format(format!("unexpected PLY header line `{line}`"))),
        }
    }
    let format = format.ok_or_else(|| Error::format("PLY header lacks a format line"))?;
    let count = count.ok_or_else(|| Error::format("PLY header lacks a vertex element"))?;
    let xyz = [("float", "x"), ("float", "y"), ("float", "z")];
    let rgb = [("uchar", "red"), ("uchar", "green"), ("uchar", "blue")];
    let matches = |want: &[(&str, &str)]| {
        props
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .eq(want.iter().copied())
    };
    let with_color = if matches(&xyz) {
        false
    } else if matches(&[xyz, rgb].concat()) {
        true
    } else {
        return Err(Error::format(format!("unsupported PLY vertex properties {props:?}")));
    };

    let mut cloud = PointCloud {
        points: Vec::with_capacity(count),
        colors: with_color.then(|| Vec::with_capacity(count)),
    };
    match format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| Error::format("PLY body is not UTF-8"))?;
            let mut rows = text.lines().filter(|l| !l.trim().is_empty());
            for i in 0..count {
                let row = rows
                    .next()
                    .ok_or_else(|| Error::format(format!("PLY truncated at vertex {i}")))?;
                let f: Vec<&str> = row.split_whitespace().collect();
                if f.len() != if with_color { 6 } else { 3 } {
                    return Err(Error::format(format!("bad PLY vertex line `{row}`")));
                }
                let num = |s: &str| s.parse::<f32>().map_err(|_| Error::format(format!("bad float `{s}`")));
                cloud.points.push([num(f[0])?, num(f[1])?, num(f[2])?]);
                if let Some(c) = cloud.colors.as_mut() {
                    let byte = |s: &str| s.parse::<u8>().map_err(|_| Error::format(format!("bad uchar `{s}`")));
                    c.push([byte(f[3])?, byte(f[4])?, byte(f[5])?]);
                }
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let stride = if with_color { 15 } else { 12 };
            if body.len() < count * stride {
                return Err(Error::format(format!(
                    "PLY payload truncated: need {} bytes, have {}",
                    count * stride,
                    body.len()
                )));
            }
            for rec in body[..count * stride].chunks_exact(stride) {
                let f = |o: usize| f32::from_le_bytes([rec[o], rec[o + 1], rec[o + 2], rec[o + 3]]);
                cloud.points.push([f(0), f(4), f(8)]);
                if let Some(c) = cloud.colors.as_mut() {
                    c.push([rec[12], rec[13], rec[14]]);
                }
            }
        }
    }
    Ok(cloud)
}

pub fn save_ply(path: impl AsRef<Path>, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_ply(cloud, format)?).map_err(|e| Error::io(path, e))
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    read_ply(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
