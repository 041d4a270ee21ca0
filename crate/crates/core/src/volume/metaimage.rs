//! MetaImage (`.mhd` + `.raw`) subset: uncompressed little-endian 3-D
//! volumes of `MET_FLOAT` or `MET_UCHAR`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;

use super::{LabelMap, VoxelGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    Image(VoxelGrid),
    Labels(LabelMap),
}

impl Volume {
    pub fn grid(&self) -> &VoxelGrid {
        match self {
            Volume::Image(g) => g,
            Volume::Labels(l) => l.grid(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ElementType {
    Float,
    UChar,
}

impl ElementType {
    fn tag(self) -> &'static str {
        match self {
            ElementType::Float => "MET_FLOAT",
            ElementType::UChar => "MET_UCHAR",
        }
    }

    fn size(self) -> usize {
        match self {
            ElementType::Float => 4,
            ElementType::UChar => 1,
        }
    }
}

struct Header {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    element: ElementType,
    data_file: PathBuf,
}

const KNOWN_KEYS: &[&str] = &[
    "ObjectType",
    "NDims",
    "BinaryData",
    "BinaryDataByteOrderMSB",
    "ElementByteOrderMSB",
    "CompressedData",
    "TransformMatrix",
    "Rotation",
    "Orientation",
    "CenterOfRotation",
    "AnatomicalOrientation",
    "ElementSpacing",
    "DimSize",
    "ElementType",
    "ElementDataFile",
    "Offset",
    "Origin",
    "Position",
];

fn header_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Header {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn parse_list<T: std::str::FromStr, const N: usize>(path: &Path, key: &str, value: &str) -> Result<[T; N]>
where
    T: Copy + Default,
{
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != N {
        return Err(header_err(path, format!("{key} expects {N} values, got `{value}`")));
    }
    let mut out = [T::default(); N];
    for (slot, part) in out.iter_mut().zip(parts) {
        *slot = part
            .parse()
            .map_err(|_| header_err(path, format!("{key}: cannot parse `{part}`")))?;
    }
    Ok(out)
}

fn is_true(value: &str) -> bool {
    matches!(value.to_ascii_lowercase().as_str(), "true" | "1")
}

fn parse_header(path: &Path, text: &str) -> Result<Header> {
    let mut ndims = None;
    let mut dims = None;
    let mut spacing = [1.0; 3];
    let mut origin = [0.0; 3];
    let mut element = None;
    let mut data_file = None;

    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| header_err(path, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        if !key.is_ascii() {
            return Err(header_err(path, format!("non-ASCII header key `{key}`")));
        }
        match key {
            "NDims" => {
                ndims = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| header_err(path, format!("NDims: cannot parse `{value}`")))?,
                )
            }
            "DimSize" => dims = Some(parse_list::<usize, 3>(path, key, value)?),
            "ElementSpacing" => spacing = parse_list::<f64, 3>(path, key, value)?,
            "Offset" | "Origin" | "Position" => origin = parse_list::<f64, 3>(path, key, value)?,
            "ElementType" => {
                element = Some(match value {
                    "MET_FLOAT" => ElementType::Float,
                    "MET_UCHAR" => ElementType::UChar,
                    other => return Err(header_err(path, format!("unsupported ElementType {other}"))),
                })
            }
            "ElementDataFile" => {
                if value.eq_ignore_ascii_case("LOCAL") || value.eq_ignore_ascii_case("LIST") {
                    return Err(header_err(path, format!("ElementDataFile = {value} is not supported")));
                }
                data_file = Some(PathBuf::from(value));
            }
            "BinaryDataByteOrderMSB" | "ElementByteOrderMSB" => {
                if is_true(value) {
                    return Err(header_err(path, "big-endian raw data is not supported"));
                }
            }
            "CompressedData" => {
                if is_true(value) {
                    return Err(header_err(path, "compressed raw data is not supported"));
                }
            }
            "TransformMatrix" | "Rotation" | "Orientation" => {
                let m = parse_list::<f64, 9>(path, key, value)?;
                let identity = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
                if m != identity {
                    return Err(header_err(path, "only axis-aligned volumes (identity TransformMatrix) are supported"));
                }
            }
            k if KNOWN_KEYS.contains(&k) => {}
            other => warn!("{}: ignoring unknown MetaImage key `{other}`", path.display()),
        }
    }

    if let Some(n) = ndims {
        if n != 3 {
            return Err(header_err(path, format!("NDims = {n}, only 3 is supported")));
        }
    } else {
        return Err(header_err(path, "missing NDims"));
    }
    let dims = dims.ok_or_else(|| header_err(path, "missing DimSize"))?;
    let element = element.ok_or_else(|| header_err(path, "missing ElementType"))?;
    let data_file = data_file.ok_or_else(|| header_err(path, "missing ElementDataFile"))?;
    Ok(Header {
        dims,
        spacing,
        origin,
        element,
        data_file,
    })
}

/// Reads a `.mhd` header and its raw payload. With `expect_labels` the
/// values are validated against the label code set.
pub fn load_volume(path: impl AsRef<Path>, expect_labels: bool) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|_| header_err(path, "header is not valid UTF-8/ASCII"))?;
    let header = parse_header(path, &text)?;

    let raw_path = match path.parent() {
        Some(dir) if header.data_file.is_relative() => dir.join(&header.data_file),
        _ => header.data_file.clone(),
    };
    let raw = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let count = header.dims.iter().product::<usize>();
    let expected = count * header.element.size();
    if raw.len() != expected {
        return Err(header_err(
            path,
            format!("raw file {} has {} bytes, expected {expected}", raw_path.display(), raw.len()),
        ));
    }
    let data: Vec<f32> = match header.element {
        ElementType::Float => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        ElementType::UChar => raw.iter().map(|&b| b as f32).collect(),
    };
    let grid = VoxelGrid::new(header.dims, header.spacing, header.origin, data)?;
    if expect_labels {
        Ok(Volume::Labels(LabelMap::new(grid)?))
    } else {
        Ok(Volume::Image(grid))
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    match load_volume(path, false)? {
        Volume::Image(g) => Ok(g),
        Volume::Labels(l) => Ok(l.into_grid()),
    }
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelMap> {
    match load_volume(path, true)? {
        Volume::Labels(l) => Ok(l),
        Volume::Image(g) => LabelMap::new(g),
    }
}

fn format_list(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
}

fn write_pair(grid: &VoxelGrid, path: &Path, element: ElementType) -> Result<()> {
    let stem = path
        .file_stem()
        .ok_or_else(|| header_err(path, "path has no file name"))?
        .to_string_lossy()
        .into_owned();
    let raw_name = format!("{stem}.raw");
    let raw_path = path.with_file_name(&raw_name);
    let [nx, ny, nz] = grid.dims();
    // `{}` on f64 prints the shortest representation that round-trips.
    let header = format!(
        "ObjectType = Image\nNDims = 3\nBinaryData = True\nBinaryDataByteOrderMSB = False\nCompressedData = False\n\
         TransformMatrix = 1 0 0 0 1 0 0 0 1\nOffset = {}\nElementSpacing = {}\nDimSize = {nx} {ny} {nz}\n\
         ElementType = {}\nElementDataFile = {raw_name}\n",
        format_list(&grid.origin()),
        format_list(&grid.spacing()),
        element.tag(),
    );
    let mut payload = Vec::with_capacity(grid.len() * element.size());
    match element {
        ElementType::Float => grid.data().iter().for_each(|v| payload.extend_from_slice(&v.to_le_bytes())),
        ElementType::UChar => grid.data().iter().for_each(|&v| payload.push(v as u8)),
    }
    let mut raw_file = fs::File::create(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    raw_file.write_all(&payload).map_err(|e| Error::io(&raw_path, e))?;
    fs::write(path, header).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes `path` (header) and a sibling `<stem>.raw` as `MET_FLOAT`.
pub fn save_volume(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<()> {
    write_pair(grid, path.as_ref(), ElementType::Float)
}

/// Writes a label map as `MET_UCHAR`.
pub fn save_labels(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    write_pair(labels.grid(), path.as_ref(), ElementType::UChar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_volume_from_handwritten_header() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("z.mhd"),
            "NDims = 3\nDimSize = 4 4 4\nElementSpacing = 1 1 1\nElementType = MET_FLOAT\nElementDataFile = z.raw\n",
        )
        .unwrap();
        fs::write(dir.path().join("z.raw"), vec![0u8; 64 * 4]).unwrap();
        let g = load_image(dir.path().join("z.mhd")).unwrap();
        assert_eq!(g.len(), 64);
        assert!(g.data().iter().all(|&v| v == 0.0));
        assert_eq!(g.spacing(), [1.0, 1.0, 1.0]);
        assert_eq!(g.origin(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f32> = (0..512).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let g = VoxelGrid::new([8, 8, 8], [0.63, 0.63, 1.50], [-12.345678901234, 0.1, 3.0], data).unwrap();
        let p = dir.path().join("r.mhd");
        save_volume(&g, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), g);
    }

    #[test]
    fn patient_scale_geometry_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let g = VoxelGrid::zeros([72, 61, 83], [1.18, 1.18, 1.00], [0.0; 3]).unwrap();
        let p = dir.path().join("big.mhd");
        save_volume(&g, &p).unwrap();
        let back = load_image(&p).unwrap();
        assert_eq!(back.dims(), [72, 61, 83]);
        assert_eq!(back.spacing(), [1.18, 1.18, 1.00]);
    }

    #[test]
    fn invalid_label_code_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("l.mhd"),
            "NDims = 3\nDimSize = 2 2 2\nElementType = MET_UCHAR\nElementDataFile = l.raw\n",
        )
        .unwrap();
        fs::write(dir.path().join("l.raw"), [0u8, 1, 2, 3, 0, 0, 0, 0]).unwrap();
        let err = load_volume(dir.path().join("l.mhd"), true).unwrap_err();
        assert!(err.to_string().contains("invalid label code"), "{err}");
        assert!(load_volume(dir.path().join("l.mhd"), false).is_ok());
    }

    #[test]
    fn header_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_image(dir.path().join("missing.mhd")), Err(Error::Io { .. })));

        fs::write(dir.path().join("bad.mhd"), "NDims = 3\nDimSize = 4 4\n").unwrap();
        assert!(matches!(load_image(dir.path().join("bad.mhd")), Err(Error::Header { .. })));

        fs::write(dir.path().join("u.mhd"), "NDims = 3\nDïmSize = 2 2 2\n").unwrap();
        let err = load_image(dir.path().join("u.mhd")).unwrap_err();
        assert!(err.to_string().contains("non-ASCII"), "{err}");
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let g = VoxelGrid::zeros([2, 2, 2], [1.0; 3], [0.0; 3]).unwrap();
        assert!(save_volume(&g, dir.path().join("nope/none.mhd")).is_err());
    }

    #[test]
    fn labels_round_trip_as_uchar() {
        let dir = tempfile::tempdir().unwrap();
        let g = VoxelGrid::new([2, 2, 2], [1.0; 3], [0.0; 3], vec![0.0, 1.0, 2.0, 1.0, 0.0, 2.0, 2.0, 1.0]).unwrap();
        let labels = LabelMap::new(g).unwrap();
        let p = dir.path().join("lab.mhd");
        save_labels(&labels, &p).unwrap();
        assert_eq!(fs::metadata(dir.path().join("lab.raw")).unwrap().len(), 8);
        assert_eq!(load_labels(&p).unwrap(), labels);
    }
}
