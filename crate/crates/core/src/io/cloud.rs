//! Point cloud files: PLY (ASCII and binary little endian), XYZ and XYZN.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::quadric::{OrientedPoint, Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    PlyBinaryLittleEndian,
    Xyz,
    Xyzn,
}

impl CloudFormat {
    /// Format implied by a file extension (`.ply` defaults to binary).
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "ply" => Ok(CloudFormat::PlyBinaryLittleEndian),
            "xyz" | "txt" => Ok(CloudFormat::Xyz),
            "xyzn" => Ok(CloudFormat::Xyzn),
            _ => Err(Error::FormatUnsupported {
                path: path.to_path_buf(),
                message: format!("unknown extension {ext:?}"),
            }),
        }
    }
}

/// Positions with optional per-point normals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CloudData {
    pub positions: Vec<Point3>,
    pub normals: Option<Vec<Point3>>,
}

impl CloudData {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Oriented points when normals are present; zero-length normals are
    /// dropped together with their points.
    pub fn oriented(&self) -> Option<PointCloud> {
        let normals = self.normals.as_ref()?;
        let points = self
            .positions
            .iter()
            .zip(normals)
            .filter_map(|(p, n)| OrientedPoint::with_normalized(*p, *n))
            .collect();
        Some(PointCloud::new(points))
    }

    pub fn from_points(points: &[OrientedPoint]) -> Self {
        CloudData {
            positions: points.iter().map(|p| p.position).collect(),
            normals: Some(points.iter().map(|p| p.normal).collect()),
        }
    }
}

fn parse_err(path: &Path, location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        location: location.into(),
        message: message.into(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_cloud(path: &Path) -> Result<CloudData> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.starts_with(b"ply") {
        return read_ply(path, &bytes);
    }
    match CloudFormat::from_path(path)? {
        CloudFormat::Xyz => read_text(path, &bytes, false),
        CloudFormat::Xyzn => read_text(path, &bytes, true),
        _ => Err(parse_err(path, "line 1", "missing 'ply' magic")),
    }
}

fn read_text(path: &Path, bytes: &[u8], require_normals: bool) -> Result<CloudData> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_err(path, "byte 0", e.to_string()))?;
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut width = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let loc = || format!("line {}", ln + 1);
        let fields: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| parse_err(path, loc(), format!("{s:?}: {e}"))))
            .collect::<Result<_>>()?;
        let expected = if require_normals { vec![6] } else { vec![3, 6] };
        if !expected.contains(&fields.len()) {
            return Err(parse_err(path, loc(), format!("expected {expected:?} fields, got {}", fields.len())));
        }
        if *width.get_or_insert(fields.len()) != fields.len() {
            return Err(parse_err(path, loc(), "inconsistent field count"));
        }
        positions.push(Point3::new(fields[0], fields[1], fields[2]));
        if fields.len() == 6 {
            normals.push(Point3::new(fields[3], fields[4], fields[5]));
        }
    }
    let normals = (width == Some(6)).then_some(normals);
    Ok(CloudData { positions, normals })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar(n, _) | Property::List(n, _, _) => n,
        }
    }
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

fn read_ply(path: &Path, bytes: &[u8]) -> Result<CloudData> {
    // header is ASCII up to and including "end_header\n"
    let marker = b"end_header";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| parse_err(path, "header", "missing end_header"))?;
    let mut body = end + marker.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) == Some(&b'\n') {
        body += 1;
    }
    let header = std::str::from_utf8(&bytes[..end]).map_err(|e| parse_err(path, "header", e.to_string()))?;
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    for (ln, line) in header.lines().enumerate() {
        let loc = format!("header line {}", ln + 1);
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] | ["ply"] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => {
                return Err(Error::FormatUnsupported {
                    path: path.to_path_buf(),
                    message: format!("PLY format {other}"),
                })
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| parse_err(path, loc.clone(), format!("bad element count {count:?}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", len, item, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(path, loc.clone(), "property before element"))?;
                let (Some(l), Some(i)) = (Scalar::parse(len), Scalar::parse(item)) else {
                    return Err(parse_err(path, loc, "unknown list property type"));
                };
                el.properties.push(Property::List(name.to_string(), l, i));
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(path, loc.clone(), "property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| parse_err(path, loc.clone(), format!("unknown type {ty:?}")))?;
                el.properties.push(Property::Scalar(name.to_string(), ty));
            }
            _ => return Err(parse_err(path, loc, format!("unexpected header line {line:?}"))),
        }
    }
    let binary = binary.ok_or_else(|| parse_err(path, "header", "missing format line"))?;
    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(path, "header", "no vertex element"))?;
    let vertex = &elements[vertex_pos];
    let col = |n: &str| vertex.properties.iter().position(|p| p.name() == n);
    let (Some(ix), Some(iy), Some(iz)) = (col("x"), col("y"), col("z")) else {
        return Err(parse_err(path, "header", "vertex lacks x, y or z"));
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };

    let rows: Vec<Vec<f64>> = if binary {
        read_binary_elements(path, &bytes[body..], &elements, vertex_pos, body)?
    } else {
        read_ascii_elements(path, &bytes[body..], &elements, vertex_pos, header.lines().count() + 1)?
    };
    let positions = rows.iter().map(|r| Point3::new(r[ix], r[iy], r[iz])).collect();
    let normals = normal_cols.map(|[a, b, c]| rows.iter().map(|r| Point3::new(r[a], r[b], r[c])).collect());
    Ok(CloudData { positions, normals })
}

/// Scalar values of every vertex row (list properties are skipped as NaN).
fn read_binary_elements(
    path: &Path,
    data: &[u8],
    elements: &[Element],
    vertex_pos: usize,
    offset: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut at = 0usize;
    let mut take = |n: usize, what: &str| -> Result<&[u8]> {
        if at + n > data.len() {
            return Err(parse_err(path, format!("byte {}", offset + at), format!("truncated data in {what}")));
        }
        let s = &data[at..at + n];
        at += n;
        Ok(s)
    };
    let mut rows = Vec::new();
    for (e_idx, el) in elements.iter().enumerate() {
        for _ in 0..el.count {
            let mut row = Vec::with_capacity(el.properties.len());
            for p in &el.properties {
                match p {
                    Property::Scalar(_, t) => row.push(t.read_le(take(t.size(), &el.name)?)),
                    Property::List(_, lt, it) => {
                        let n = lt.read_le(take(lt.size(), &el.name)?);
                        if !(n >= 0.0) {
                            return Err(parse_err(path, format!("byte {}", offset + at), "negative list length"));
                        }
                        take(n as usize * it.size(), &el.name)?;
                        row.push(f64::NAN);
                    }
                }
            }
            if e_idx == vertex_pos {
                rows.push(row);
            }
        }
        if e_idx == vertex_pos {
            break;
        }
    }
    Ok(rows)
}

fn read_ascii_elements(
    path: &Path,
    data: &[u8],
    elements: &[Element],
    vertex_pos: usize,
    first_line: usize,
) -> Result<Vec<Vec<f64>>> {
    let text = std::str::from_utf8(data).map_err(|e| parse_err(path, "body", e.to_string()))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut rows = Vec::new();
    for (e_idx, el) in elements.iter().enumerate() {
        for k in 0..el.count {
            let Some((ln, line)) = lines.next() else {
                return Err(parse_err(
                    path,
                    format!("line {}", first_line + 1),
                    format!("expected {} {} rows, found {k}", el.count, el.name),
                ));
            };
            let loc = format!("line {}", first_line + ln + 1);
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|e| parse_err(path, loc.clone(), format!("{s:?}: {e}"))))
                .collect::<Result<_>>()?;
            if e_idx == vertex_pos {
                if el.properties.iter().any(|p| matches!(p, Property::List(..))) {
                    return Err(Error::FormatUnsupported {
                        path: path.to_path_buf(),
                        message: "list properties on ASCII vertices".into(),
                    });
                }
                if values.len() != el.properties.len() {
                    return Err(parse_err(
                        path,
                        loc,
                        format!("expected {} values, got {}", el.properties.len(), values.len()),
                    ));
                }
                rows.push(values);
            }
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(
            path,
            format!("line {}", first_line + ln + 1),
            "more rows than declared in the header",
        ));
    }
    Ok(rows)
}

/// Writes `cloud` in `format`; binary PLY stores doubles, text formats use
/// round-trip float formatting.
pub fn write_cloud(path: &Path, cloud: &CloudData, format: CloudFormat) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    let normals = cloud.normals.as_ref();
    if matches!(format, CloudFormat::Xyzn) && normals.is_none() {
        return Err(Error::FormatUnsupported {
            path: path.to_path_buf(),
            message: "XYZN needs normals".into(),
        });
    }
    match format {
        CloudFormat::PlyAscii | CloudFormat::PlyBinaryLittleEndian => {
            let binary = format == CloudFormat::PlyBinaryLittleEndian;
            let ty = if binary { "double" } else { "float64" };
            let mut header = format!(
                "ply\nformat {} 1.0\nelement vertex {}\nproperty {ty} x\nproperty {ty} y\nproperty {ty} z\n",
                if binary { "binary_little_endian" } else { "ascii" },
                cloud.len()
            );
            if normals.is_some() {
                header.push_str(&format!("property {ty} nx\nproperty {ty} ny\nproperty {ty} nz\n"));
            }
            header.push_str("end_header\n");
            out.extend_from_slice(header.as_bytes());
            for (i, p) in cloud.positions.iter().enumerate() {
                let mut vals = vec![p.x, p.y, p.z];
                if let Some(n) = normals {
                    vals.extend_from_slice(&[n[i].x, n[i].y, n[i].z]);
                }
                if binary {
                    for v in vals {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                } else {
                    let line: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
                    out.extend_from_slice(line.join(" ").as_bytes());
                    out.push(b'\n');
                }
            }
        }
        CloudFormat::Xyz | CloudFormat::Xyzn => {
            for (i, p) in cloud.positions.iter().enumerate() {
                let mut line = format!("{:?} {:?} {:?}", p.x, p.y, p.z);
                if format == CloudFormat::Xyzn {
                    let n = normals.unwrap()[i];
                    line.push_str(&format!(" {:?} {:?} {:?}", n.x, n.y, n.z));
                }
                out.extend_from_slice(line.as_bytes());
                out.push(b'\n');
            }
        }
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&out).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample() -> CloudData {
        CloudData {
            positions: vec![
                Point3::new(0.1, -2.5, 3.0),
                Point3::new(1.0 / 3.0, 1e-300, -7.25),
                Point3::new(f64::MAX, 0.0, -0.0),
            ],
            normals: Some(vec![Point3::x(), Point3::y(), Point3::new(0.6, 0.8, 0.0)]),
        }
    }

    #[test]
    fn xyz_with_three_points() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("a.xyz");
        fs::write(&p, "0 0 0\n1 2 3\n# note\n4.5 5 6\n").unwrap();
        let c = read_cloud(&p).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.normals.is_none());
        assert_eq!(c.positions[2], Point3::new(4.5, 5.0, 6.0));
    }

    #[test]
    fn xyzn_requires_six_fields() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("a.xyzn");
        fs::write(&p, "0 0 0 0 0 1\n1 2 3 0 1\n").unwrap();
        match read_cloud(&p) {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "line 2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vertex_count_mismatch() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("a.ply");
        fs::write(
            &p,
            "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 1 1\n",
        )
        .unwrap();
        assert!(matches!(read_cloud(&p), Err(Error::Parse { .. })));

        let mut bin = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nend_header\n".to_vec();
        bin.extend_from_slice(&[0u8; 8 * 4]);
        fs::write(&p, bin).unwrap();
        assert!(matches!(read_cloud(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn unsupported_inputs() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("a.ply");
        fs::write(&p, "ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n").unwrap();
        assert!(matches!(read_cloud(&p), Err(Error::FormatUnsupported { .. })));
        let q = dir.path().join("a.obj");
        fs::write(&q, "v 0 0 0\n").unwrap();
        assert!(matches!(read_cloud(&q), Err(Error::FormatUnsupported { .. })));
    }

    #[test]
    fn round_trips_are_exact() {
        let dir = tempdir().unwrap();
        for (name, fmt) in [
            ("b.ply", CloudFormat::PlyBinaryLittleEndian),
            ("a.ply", CloudFormat::PlyAscii),
            ("c.xyzn", CloudFormat::Xyzn),
        ] {
            let p = dir.path().join(name);
            write_cloud(&p, &sample(), fmt).unwrap();
            let back = read_cloud(&p).unwrap();
            for (a, b) in back.positions.iter().zip(&sample().positions) {
                for k in 0..3 {
                    assert_eq!(a[k].to_bits(), b[k].to_bits(), "{name}");
                }
            }
            assert_eq!(back.normals, sample().normals);
        }
    }

    #[test]
    fn ply_with_faces_and_mixed_types() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.ply");
        let mut bin = b"ply\nformat binary_little_endian 1.0\ncomment test\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n".to_vec();
        for v in [[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0]] {
            for c in v {
                bin.extend_from_slice(&c.to_le_bytes());
            }
            bin.push(200);
        }
        bin.push(3);
        for i in [0i32, 1, 1] {
            bin.extend_from_slice(&i.to_le_bytes());
        }
        fs::write(&p, bin).unwrap();
        let c = read_cloud(&p).unwrap();
        assert_eq!(c.positions, vec![Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)]);
    }
}
