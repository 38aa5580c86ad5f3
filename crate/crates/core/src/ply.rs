//! Reading and writing point clouds in the PLY format.
//!
//! Only the `vertex` element is interpreted. `x`, `y`, `z` are required and
//! `nx`, `ny`, `nz` are picked up when all three are present; every other
//! property (colors, intensities, ...) and every other element is skipped.
//! Both `ascii 1.0` and `binary_little_endian 1.0` bodies are accepted.
//! Output always uses `float` properties.

use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;
use nalgebra::{Point3, Vector3};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
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
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read_le(self, bytes: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => bytes[0] as i8 as f64,
            ScalarType::U8 => bytes[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { ty: ScalarType, name: String },
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    line: usize,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    body_offset: usize,
    end_line: usize,
}

fn header_err(line: usize, message: impl Into<String>) -> Error {
    Error::PlyHeader {
        line,
        message: message.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();

    loop {
        line_no += 1;
        let rest = &bytes[offset..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(header_err(
                line_no,
                "unexpected end of file before end_header",
            ));
        };
        let raw = &rest[..nl];
        offset += nl + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| header_err(line_no, "header is not valid UTF-8"))?
            .trim_end_matches('\r')
            .trim();
        let mut tokens = line.split_whitespace();
        let keyword = tokens.next().unwrap_or("");

        if line_no == 1 {
            if line != "ply" {
                return Err(header_err(
                    1,
                    format!("expected magic 'ply', found '{line}'"),
                ));
            }
            continue;
        }

        match keyword {
            "" | "comment" | "obj_info" => {}
            "format" => {
                let kind = tokens.next().unwrap_or("");
                let version = tokens.next().unwrap_or("");
                if version != "1.0" {
                    return Err(header_err(
                        line_no,
                        format!("unsupported version '{version}'"),
                    ));
                }
                format = Some(match kind {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => {
                        return Err(header_err(line_no, format!("unsupported format '{other}'")))
                    }
                });
            }
            "element" => {
                let name = tokens
                    .next()
                    .ok_or_else(|| header_err(line_no, "element without a name"))?;
                let count = tokens
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| {
                        header_err(line_no, "element count is not a non-negative integer")
                    })?;
                elements.push(Element {
                    name: name.to_string(),
                    line: line_no,
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| header_err(line_no, "property declared before any element"))?;
                let ty = tokens
                    .next()
                    .ok_or_else(|| header_err(line_no, "property without a type"))?;
                let property = if ty == "list" {
                    let count = tokens.next().and_then(ScalarType::parse);
                    let item = tokens.next().and_then(ScalarType::parse);
                    match (count, item, tokens.next()) {
                        (Some(count), Some(item), Some(_)) => Property::List { count, item },
                        _ => return Err(header_err(line_no, "malformed list property")),
                    }
                } else {
                    let ty = ScalarType::parse(ty).ok_or_else(|| {
                        header_err(line_no, format!("unknown property type '{ty}'"))
                    })?;
                    let name = tokens
                        .next()
                        .ok_or_else(|| header_err(line_no, "property without a name"))?;
                    Property::Scalar {
                        ty,
                        name: name.to_string(),
                    }
                };
                element.properties.push(property);
            }
            "end_header" => break,
            other => return Err(header_err(line_no, format!("unknown keyword '{other}'"))),
        }
    }

    let format = format.ok_or_else(|| header_err(line_no, "missing format line"))?;
    Ok(Header {
        format,
        elements,
        body_offset: offset,
        end_line: line_no,
    })
}

/// Column positions of the properties we care about inside the vertex element.
struct VertexLayout {
    xyz: [usize; 3],
    normal: Option<[usize; 3]>,
}

fn vertex_layout(element: &Element) -> Result<VertexLayout> {
    let find = |name: &str| {
        element
            .properties
            .iter()
            .position(|p| matches!(p, Property::Scalar { name: n, .. } if n == name))
    };
    let xyz = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => [x, y, z],
        _ => {
            return Err(Error::PlyHeader {
                line: element.line,
                message: "vertex element lacks x/y/z properties".into(),
            })
        }
    };
    let normal = match (find("nx"), find("ny"), find("nz")) {
        (Some(x), Some(y), Some(z)) => Some([x, y, z]),
        _ => None,
    };
    Ok(VertexLayout { xyz, normal })
}

/// Sequential reader over the body of either encoding.
enum Body<'a> {
    Ascii(std::str::SplitAsciiWhitespace<'a>),
    Binary { bytes: &'a [u8], pos: usize },
}

impl Body<'_> {
    fn next(&mut self, ty: ScalarType) -> Option<Result<f64>> {
        match self {
            Body::Ascii(tokens) => {
                let tok = tokens.next()?;
                Some(
                    tok.parse::<f64>()
                        .map_err(|_| Error::PlyBody(format!("invalid number '{tok}'"))),
                )
            }
            Body::Binary { bytes, pos } => {
                let size = ty.size();
                if *pos + size > bytes.len() {
                    return None;
                }
                let v = ty.read_le(&bytes[*pos..*pos + size]);
                *pos += size;
                Some(Ok(v))
            }
        }
    }

    /// Reads one element instance into `row` (list properties are skipped and
    /// leave a NaN placeholder). Returns `None` on end of data.
    fn read_row(&mut self, element: &Element, row: &mut Vec<f64>) -> Option<Result<()>> {
        row.clear();
        for property in &element.properties {
            match property {
                Property::Scalar { ty, .. } => match self.next(*ty)? {
                    Ok(v) => row.push(v),
                    Err(e) => return Some(Err(e)),
                },
                Property::List { count, item } => {
                    let n = match self.next(*count)? {
                        Ok(n) if n >= 0.0 && n.fract() == 0.0 => n as usize,
                        Ok(n) => {
                            return Some(Err(Error::PlyBody(format!("invalid list length {n}"))))
                        }
                        Err(e) => return Some(Err(e)),
                    };
                    for _ in 0..n {
                        if let Err(e) = self.next(*item)? {
                            return Some(Err(e));
                        }
                    }
                    row.push(f64::NAN);
                }
            }
        }
        Some(Ok(()))
    }
}

/// Parses a PLY document held in memory.
pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud> {
    let header = parse_header(bytes)?;
    let vertex_idx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::PlyHeader {
            line: header.end_line,
            message: "no vertex element declared".into(),
        })?;
    let layout = vertex_layout(&header.elements[vertex_idx])?;
    let body_bytes = &bytes[header.body_offset..];
    let mut body = match header.format {
        PlyFormat::Ascii => Body::Ascii(
            std::str::from_utf8(body_bytes)
                .map_err(|_| Error::PlyBody("ASCII body is not valid UTF-8".into()))?
                .split_ascii_whitespace(),
        ),
        PlyFormat::BinaryLittleEndian => Body::Binary {
            bytes: body_bytes,
            pos: 0,
        },
    };

    let mut row = Vec::new();
    for element in &header.elements[..vertex_idx] {
        for _ in 0..element.count {
            match body.read_row(element, &mut row) {
                Some(Ok(())) => {}
                Some(Err(e)) => return Err(e),
                None => {
                    return Err(Error::PlyBody(format!(
                        "body ended inside element '{}'",
                        element.name
                    )))
                }
            }
        }
    }

    let vertex = &header.elements[vertex_idx];
    let mut positions = Vec::with_capacity(vertex.count);
    let mut normals = layout.normal.map(|_| Vec::with_capacity(vertex.count));
    for read in 0..vertex.count {
        match body.read_row(vertex, &mut row) {
            Some(Ok(())) => {}
            Some(Err(e)) => return Err(e),
            None => {
                return Err(Error::PlyTruncated {
                    expected: vertex.count,
                    read,
                })
            }
        }
        let [x, y, z] = layout.xyz;
        positions.push(Point3::new(row[x], row[y], row[z]));
        if let (Some(cols), Some(normals)) = (layout.normal, normals.as_mut()) {
            normals.push(Vector3::new(row[cols[0]], row[cols[1]], row[cols[2]]));
        }
    }

    let normals = normals.and_then(|mut normals| {
        for n in normals.iter_mut() {
            let len = n.norm();
            if !(len.is_finite() && len > 1e-12) {
                warn!("discarding normals: at least one is zero or non-finite");
                return None;
            }
            if (len - 1.0).abs() > 1e-7 {
                *n /= len;
            }
        }
        Some(normals)
    });

    Ok(PointCloud {
        positions,
        normals,
        degenerate_normals: false,
    })
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes)
}

/// Serializes a cloud to PLY bytes. Coordinates are stored as `float`.
pub fn encode_ply(cloud: &PointCloud, format: PlyFormat) -> Result<Vec<u8>> {
    cloud.require_non_empty("save_ply")?;
    cloud.validate()?;
    let mut out = Vec::with_capacity(64 + cloud.len() * 24);
    let format_line = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut header = format!(
        "ply\nformat {format_line} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        cloud.len()
    );
    if cloud.normals.is_some() {
        header.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    header.push_str("end_header\n");
    out.extend_from_slice(header.as_bytes());

    for (i, p) in cloud.positions.iter().enumerate() {
        let mut values = [p.x, p.y, p.z, 0.0, 0.0, 0.0];
        let mut n = 3;
        if let Some(normals) = &cloud.normals {
            values[3..].copy_from_slice(normals[i].as_slice());
            n = 6;
        }
        match format {
            PlyFormat::Ascii => {
                let line = values[..n]
                    .iter()
                    .map(|v| (*v as f32).to_string())
                    .collect::<Vec<_>>()
                    .join(" ");
                out.extend_from_slice(line.as_bytes());
                out.push(b'\n');
            }
            PlyFormat::BinaryLittleEndian => {
                for v in &values[..n] {
                    out.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

pub fn save_ply(cloud: &PointCloud, path: impl AsRef<Path>, format: PlyFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_ply(cloud, format)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}
