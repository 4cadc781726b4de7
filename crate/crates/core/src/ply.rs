//! Minimal PLY support: the `vertex` element of ASCII or binary little-endian
//! files, decoded into a dense `f64` table.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::I8 => "char",
            Self::U8 => "uchar",
            Self::I16 => "short",
            Self::U16 => "ushort",
            Self::I32 => "int",
            Self::U32 => "uint",
            Self::F32 => "float",
            Self::F64 => "double",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn write_le(self, v: f64, out: &mut Vec<u8>) {
        match self {
            Self::I8 => out.push(v.round() as i8 as u8),
            Self::U8 => out.push(v.round().clamp(0.0, 255.0) as u8),
            Self::I16 => out.extend_from_slice(&(v.round() as i16).to_le_bytes()),
            Self::U16 => out.extend_from_slice(&(v.round() as u16).to_le_bytes()),
            Self::I32 => out.extend_from_slice(&(v.round() as i32).to_le_bytes()),
            Self::U32 => out.extend_from_slice(&(v.round() as u32).to_le_bytes()),
            Self::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Self::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Self::F32 | Self::F64)
    }
}

#[derive(Debug, Clone)]
struct ElementDecl {
    name: String,
    count: usize,
    properties: Vec<(String, ScalarType)>,
    has_list: bool,
}

/// The decoded `vertex` element: `count` rows of `properties.len()` values.
#[derive(Debug, Clone)]
pub struct VertexTable {
    pub properties: Vec<(String, ScalarType)>,
    pub count: usize,
    values: Vec<f64>,
}

impl VertexTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|(n, _)| n == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.column(name).ok_or_else(|| Error::MissingProperty(name.to_string()))
    }

    pub fn scalar_type(&self, col: usize) -> ScalarType {
        self.properties[col].1
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.properties.len() + col]
    }

    /// Like [`get`](Self::get) but rejects NaN/inf with the property name and vertex index.
    pub fn get_finite(&self, row: usize, col: usize) -> Result<f64> {
        let v = self.get(row, col);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { property: self.properties[col].0.clone(), vertex: row })
        }
    }
}

fn split_header(bytes: &[u8]) -> Result<(&str, usize)> {
    let needle = b"end_header";
    let pos = bytes
        .windows(needle.len())
        .position(|w| w == needle)
        .ok_or_else(|| Error::PlyHeader("no end_header".into()))?;
    let mut body = pos + needle.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) != Some(&b'\n') {
        return Err(Error::PlyHeader("end_header not followed by newline".into()));
    }
    body += 1;
    let header = std::str::from_utf8(&bytes[..pos]).map_err(|_| Error::PlyHeader("header is not UTF-8".into()))?;
    Ok((header, body))
}

fn parse_header(header: &str) -> Result<(Format, Vec<ElementDecl>)> {
    let mut lines = header.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some("ply") {
        return Err(Error::PlyHeader("missing `ply` magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<ElementDecl> = Vec::new();
    for line in lines {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                format = Some(match tok.next() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLittleEndian,
                    Some(other) => return Err(Error::PlyHeader(format!("unsupported format `{other}`"))),
                    None => return Err(Error::PlyHeader("empty format line".into())),
                });
            }
            Some("element") => {
                let name = tok.next().ok_or_else(|| Error::PlyHeader("element without name".into()))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::PlyHeader(format!("bad count for element `{name}`")))?;
                elements.push(ElementDecl { name: name.to_string(), count, properties: Vec::new(), has_list: false });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| Error::PlyHeader("property before element".into()))?;
                let ty = tok.next().ok_or_else(|| Error::PlyHeader("property without type".into()))?;
                if ty == "list" {
                    el.has_list = true;
                    continue;
                }
                let ty =
                    ScalarType::parse(ty).ok_or_else(|| Error::PlyHeader(format!("unknown property type `{ty}`")))?;
                let name = tok.next().ok_or_else(|| Error::PlyHeader("property without name".into()))?;
                el.properties.push((name.to_string(), ty));
            }
            Some("comment") | Some("obj_info") => {}
            Some(other) => return Err(Error::PlyHeader(format!("unexpected keyword `{other}`"))),
            None => {}
        }
    }
    let format = format.ok_or_else(|| Error::PlyHeader("missing format line".into()))?;
    Ok((format, elements))
}

/// Decodes the `vertex` element of a PLY blob.
pub fn read_vertices(bytes: &[u8]) -> Result<VertexTable> {
    let (header, body_start) = split_header(bytes)?;
    let (format, elements) = parse_header(header)?;
    let vertex_idx =
        elements.iter().position(|e| e.name == "vertex").ok_or_else(|| Error::PlyHeader("no vertex element".into()))?;
    let vertex = &elements[vertex_idx];
    if vertex.has_list {
        return Err(Error::PlyHeader("list properties on vertex are not supported".into()));
    }
    let ncols = vertex.properties.len();
    let body = &bytes[body_start..];
    let mut values = Vec::with_capacity(vertex.count * ncols);

    match format {
        Format::BinaryLittleEndian => {
            let mut offset = 0usize;
            for el in &elements[..vertex_idx] {
                if el.has_list {
                    return Err(Error::PlyHeader(format!("cannot skip list element `{}` before vertex", el.name)));
                }
                offset += el.count * el.properties.iter().map(|(_, t)| t.size()).sum::<usize>();
            }
            let stride: usize = vertex.properties.iter().map(|(_, t)| t.size()).sum();
            let expected = offset + stride * vertex.count;
            if body.len() < expected {
                return Err(Error::Truncated { expected, found: body.len() });
            }
            for row in 0..vertex.count {
                let mut p = offset + row * stride;
                for (_, ty) in &vertex.properties {
                    values.push(ty.read_le(&body[p..p + ty.size()]));
                    p += ty.size();
                }
            }
        }
        Format::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| Error::PlyHeader("ASCII body is not UTF-8".into()))?;
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            for el in &elements[..vertex_idx] {
                for _ in 0..el.count {
                    lines.next();
                }
            }
            for row in 0..vertex.count {
                let line = lines.next().ok_or(Error::Truncated { expected: vertex.count, found: row })?;
                let mut n = 0;
                for (tok, (name, _)) in line.split_whitespace().zip(&vertex.properties) {
                    let v: f64 = tok
                        .parse()
                        .map_err(|_| Error::PlyHeader(format!("bad value `{tok}` for `{name}` at vertex {row}")))?;
                    values.push(v);
                    n += 1;
                }
                if n != ncols {
                    return Err(Error::PlyHeader(format!("vertex {row} has {n} values, expected {ncols}")));
                }
            }
        }
    }

    Ok(VertexTable { properties: vertex.properties.clone(), count: vertex.count, values })
}

/// Encodes a single `vertex` element. `values` is row-major with one entry per property.
pub fn write_vertices(format: Format, properties: &[(&str, ScalarType)], values: &[f64]) -> Vec<u8> {
    let ncols = properties.len();
    assert!(ncols > 0 && values.len() % ncols == 0, "ragged vertex table");
    let count = values.len() / ncols;
    let mut out = Vec::with_capacity(256 + values.len() * 4);
    out.extend_from_slice(b"ply\n");
    out.extend_from_slice(match format {
        Format::Ascii => b"format ascii 1.0\n".as_slice(),
        Format::BinaryLittleEndian => b"format binary_little_endian 1.0\n".as_slice(),
    });
    out.extend_from_slice(format!("element vertex {count}\n").as_bytes());
    for (name, ty) in properties {
        out.extend_from_slice(format!("property {} {}\n", ty.name(), name).as_bytes());
    }
    out.extend_from_slice(b"end_header\n");
    match format {
        Format::BinaryLittleEndian => {
            for row in values.chunks(ncols) {
                for (v, (_, ty)) in row.iter().zip(properties) {
                    ty.write_le(*v, &mut out);
                }
            }
        }
        Format::Ascii => {
            use std::fmt::Write;
            let mut line = String::new();
            for row in values.chunks(ncols) {
                line.clear();
                for (i, (v, (_, ty))) in row.iter().zip(properties).enumerate() {
                    if i > 0 {
                        line.push(' ');
                    }
                    if ty.is_integer() {
                        write!(line, "{}", v.round() as i64).unwrap();
                    } else {
                        write!(line, "{v}").unwrap();
                    }
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
        }
    }
    out
}
