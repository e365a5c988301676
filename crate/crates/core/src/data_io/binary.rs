//! Little-endian binary formats.
//!
//! * `EMAP` edge map: magic, `u32` version (1), `u32` width, `u32` height,
//!   `W·H` `f32` magnitudes then `W·H` `f32` orientations, row-major.
//! * `FMAP` feature map: magic, `u32` version (1), `u32` C, `u32` H, `u32` W,
//!   `u32` image width, `u32` image height, then `C·H·W` `f32`, channel-major.
//! * `SSPB` linear model: magic, `u32` version (1), `u32` dim, `f64` bias,
//!   `dim` `f64` weights, `u32` group count followed by `(u32 offset,
//!   u32 length)` pairs, `u32` selection count followed by `u32` kept bin ids.

use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::edge_bev::EdgeMap;
use crate::error::{Error, Result};
use crate::sparse_svm::{BinSelection, GroupStructure, LinearModel};
use crate::spp::FeatureMap;

pub const EDGE_MAGIC: &[u8; 4] = b"EMAP";
pub const FEATURE_MAGIC: &[u8; 4] = b"FMAP";
pub const MODEL_MAGIC: &[u8; 4] = b"SSPB";
pub const FORMAT_VERSION: u32 = 1;

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn read_magic<R: Read>(r: &mut R, expected: &[u8; 4], path: &Path) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| format_err(path, format!("truncated header: {e}")))?;
    if &magic != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: String::from_utf8_lossy(expected).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let version = read_u32(r, path)?;
    if version != FORMAT_VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, path: &Path) -> Result<u32> {
    r.read_u32::<LE>()
        .map_err(|e| format_err(path, format!("truncated: {e}")))
}

fn read_f32s<R: Read>(r: &mut R, n: usize, path: &Path) -> Result<Vec<f32>> {
    let mut v = vec![0f32; n];
    r.read_f32_into::<LE>(&mut v)
        .map_err(|e| format_err(path, format!("truncated payload: {e}")))?;
    Ok(v)
}

fn expect_eof<R: Read>(r: &mut R, path: &Path) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok(()),
        Ok(_) => Err(format_err(path, "trailing bytes after payload")),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn encode_edge_map(map: &EdgeMap) -> Vec<u8> {
    let n = map.width() * map.height();
    let mut out = Vec::with_capacity(16 + 8 * n);
    out.extend_from_slice(EDGE_MAGIC);
    for v in [FORMAT_VERSION, map.width() as u32, map.height() as u32] {
        out.write_u32::<LE>(v).unwrap();
    }
    for &m in map.magnitude().iter().chain(map.orientation()) {
        out.write_f32::<LE>(m).unwrap();
    }
    out
}

pub fn decode_edge_map<R: Read>(r: &mut R, path: &Path) -> Result<EdgeMap> {
    let (w, h) = read_edge_header(r, path)?;
    let mag = read_f32s(r, w * h, path)?;
    let ori = read_f32s(r, w * h, path)?;
    expect_eof(r, path)?;
    EdgeMap::new(w, h, mag, ori).map_err(|e| format_err(path, e.to_string()))
}

fn read_edge_header<R: Read>(r: &mut R, path: &Path) -> Result<(usize, usize)> {
    read_magic(r, EDGE_MAGIC, path)?;
    let w = read_u32(r, path)? as usize;
    let h = read_u32(r, path)? as usize;
    Ok((w, h))
}

pub fn write_edge_map(path: &Path, map: &EdgeMap) -> Result<()> {
    write_all(path, &encode_edge_map(map))
}

pub fn read_edge_map(path: &Path) -> Result<EdgeMap> {
    decode_edge_map(&mut open(path)?, path)
}

/// Width and height from an edge-map header, after checking the file size.
pub fn peek_edge_map(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = read_edge_header(&mut open(path)?, path)?;
    let len = std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
    let expected = 16 + 8 * (w as u64) * (h as u64);
    if len != expected {
        return Err(format_err(path, format!("file is {len} bytes, expected {expected}")));
    }
    Ok((w, h))
}

pub fn encode_feature_map(fm: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + 4 * fm.data().len());
    out.extend_from_slice(FEATURE_MAGIC);
    for v in [
        FORMAT_VERSION,
        fm.channels() as u32,
        fm.map_height() as u32,
        fm.map_width() as u32,
        fm.image_width() as u32,
        fm.image_height() as u32,
    ] {
        out.write_u32::<LE>(v).unwrap();
    }
    for &v in fm.data() {
        out.write_f32::<LE>(v).unwrap();
    }
    out
}

/// Header fields of a feature map: channels, map height, map width, image
/// width, image height.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureHeader {
    pub channels: usize,
    pub map_height: usize,
    pub map_width: usize,
    pub image_width: usize,
    pub image_height: usize,
}

fn read_feature_header<R: Read>(r: &mut R, path: &Path) -> Result<FeatureHeader> {
    read_magic(r, FEATURE_MAGIC, path)?;
    let mut v = [0usize; 5];
    for x in v.iter_mut() {
        *x = read_u32(r, path)? as usize;
    }
    Ok(FeatureHeader {
        channels: v[0],
        map_height: v[1],
        map_width: v[2],
        image_width: v[3],
        image_height: v[4],
    })
}

pub fn decode_feature_map<R: Read>(r: &mut R, path: &Path) -> Result<FeatureMap> {
    let h = read_feature_header(r, path)?;
    let data = read_f32s(r, h.channels * h.map_height * h.map_width, path)?;
    expect_eof(r, path)?;
    FeatureMap::new(
        h.channels,
        h.map_width,
        h.map_height,
        h.image_width,
        h.image_height,
        data,
    )
    .map_err(|e| format_err(path, e.to_string()))
}

pub fn write_feature_map(path: &Path, fm: &FeatureMap) -> Result<()> {
    write_all(path, &encode_feature_map(fm))
}

pub fn read_feature_map(path: &Path) -> Result<FeatureMap> {
    decode_feature_map(&mut open(path)?, path)
}

pub fn peek_feature_map(path: &Path) -> Result<FeatureHeader> {
    let h = read_feature_header(&mut open(path)?, path)?;
    let len = std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
    let expected = 28 + 4 * (h.channels * h.map_height * h.map_width) as u64;
    if len != expected {
        return Err(format_err(path, format!("file is {len} bytes, expected {expected}")));
    }
    Ok(h)
}

pub fn encode_model(model: &LinearModel, selection: &BinSelection) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * model.dim());
    out.extend_from_slice(MODEL_MAGIC);
    out.write_u32::<LE>(FORMAT_VERSION).unwrap();
    out.write_u32::<LE>(model.dim() as u32).unwrap();
    out.write_f64::<LE>(model.bias).unwrap();
    for &w in &model.weights {
        out.write_f64::<LE>(w).unwrap();
    }
    out.write_u32::<LE>(model.groups.len() as u32).unwrap();
    for &(o, l) in model.groups.spans() {
        out.write_u32::<LE>(o as u32).unwrap();
        out.write_u32::<LE>(l as u32).unwrap();
    }
    out.write_u32::<LE>(selection.len() as u32).unwrap();
    for &k in selection.kept() {
        out.write_u32::<LE>(k as u32).unwrap();
    }
    out
}

pub fn decode_model(bytes: &[u8], path: &Path) -> Result<(LinearModel, BinSelection)> {
    let mut r = Cursor::new(bytes);
    read_magic(&mut r, MODEL_MAGIC, path)?;
    let dim = read_u32(&mut r, path)? as usize;
    let f64_err = |e: std::io::Error| format_err(path, format!("truncated: {e}"));
    let bias = r.read_f64::<LE>().map_err(f64_err)?;
    let mut weights = vec![0f64; dim];
    r.read_f64_into::<LE>(&mut weights).map_err(f64_err)?;
    let groups = read_u32(&mut r, path)? as usize;
    let mut spans = Vec::with_capacity(groups);
    for _ in 0..groups {
        let o = read_u32(&mut r, path)? as usize;
        let l = read_u32(&mut r, path)? as usize;
        spans.push((o, l));
    }
    let kept_n = read_u32(&mut r, path)? as usize;
    let mut kept = Vec::with_capacity(kept_n);
    for _ in 0..kept_n {
        kept.push(read_u32(&mut r, path)? as usize);
    }
    expect_eof(&mut r, path)?;
    if kept.windows(2).any(|w| w[1] <= w[0]) {
        return Err(format_err(path, "selection table is not strictly increasing"));
    }
    let groups = GroupStructure::new(spans).map_err(|e| format_err(path, e.to_string()))?;
    let model = LinearModel::new(weights, bias, groups).map_err(|e| format_err(path, e.to_string()))?;
    Ok((model, BinSelection::new(kept, None)))
}

pub fn write_model(path: &Path, model: &LinearModel, selection: &BinSelection) -> Result<()> {
    write_all(path, &encode_model(model, selection))
}

pub fn read_model(path: &Path) -> Result<(LinearModel, BinSelection)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn edge_header_layout() {
        let map = EdgeMap::new(2, 1, vec![1.0, 2.0], vec![0.5, 0.25]).unwrap();
        let b = encode_edge_map(&map);
        assert_eq!(&b[..4], b"EMAP");
        assert_eq!(&b[4..16], &[1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(b.len(), 16 + 16);
        assert_eq!(&b[16..20], &1.0f32.to_le_bytes());
    }

    #[test]
    fn feature_header_layout() {
        let fm = FeatureMap::new(3, 2, 1, 32, 16, vec![0.0; 6]).unwrap();
        let b = encode_feature_map(&fm);
        assert_eq!(&b[..4], b"FMAP");
        let words: Vec<u32> = b[4..28]
            .chunks(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(words, vec![1, 3, 1, 2, 32, 16]);
    }

    #[test]
    fn bad_magic_is_named() {
        let mut b = encode_edge_map(&EdgeMap::zeros(1, 1));
        b[..4].copy_from_slice(b"XXXX");
        let err = decode_edge_map(&mut Cursor::new(b), Path::new("a.emap")).unwrap_err();
        assert!(matches!(err, Error::BadMagic { .. }));
        assert!(err.to_string().contains("a.emap"));
    }

    #[test]
    fn truncated_and_trailing_rejected() {
        let b = encode_edge_map(&EdgeMap::zeros(3, 3));
        assert!(decode_edge_map(&mut Cursor::new(&b[..b.len() - 1]), p()).is_err());
        let mut long = b.clone();
        long.push(0);
        assert!(decode_edge_map(&mut Cursor::new(long), p()).is_err());
    }

    #[test]
    fn model_layout() {
        let g = GroupStructure::from_lengths(&[2, 1]).unwrap();
        let m = LinearModel::new(vec![0.5, -1.0, 2.0], 0.25, g).unwrap();
        let sel = BinSelection::new(vec![4, 9], None);
        let b = encode_model(&m, &sel);
        assert_eq!(&b[..4], b"SSPB");
        assert_eq!(b.len(), 4 + 4 + 4 + 8 + 24 + 4 + 16 + 4 + 8);
        let (m2, s2) = decode_model(&b, p()).unwrap();
        assert_eq!(m2, m);
        assert_eq!(s2.kept(), sel.kept());
    }

    proptest! {
        #[test]
        fn edge_map_round_trip(w in 1usize..6, h in 1usize..6, seed in any::<u64>()) {
            let n = w * h;
            let mag: Vec<f32> = (0..n).map(|i| ((seed >> (i % 60)) & 0xff) as f32 / 7.0).collect();
            let ori: Vec<f32> = (0..n).map(|i| (i as f32 * 0.37) % 3.0).collect();
            let map = EdgeMap::new(w, h, mag, ori).unwrap();
            let bytes = encode_edge_map(&map);
            let back = decode_edge_map(&mut Cursor::new(&bytes), p()).unwrap();
            prop_assert_eq!(encode_edge_map(&back), bytes);
            prop_assert_eq!(back, map);
        }

        #[test]
        fn model_round_trip(
            weights in proptest::collection::vec(-1e6f64..1e6, 1..20),
            bias in -10.0f64..10.0,
            kept in proptest::collection::btree_set(0usize..500, 0..10),
        ) {
            let m = LinearModel::new(weights.clone(), bias, GroupStructure::single(weights.len())).unwrap();
            let sel = BinSelection::new(kept.into_iter().collect(), None);
            let bytes = encode_model(&m, &sel);
            let (m2, s2) = decode_model(&bytes, p()).unwrap();
            prop_assert_eq!(encode_model(&m2, &s2), bytes);
        }

        #[test]
        fn feature_map_round_trip(c in 1usize..4, w in 1usize..5, h in 1usize..5, v in 0.0f32..10.0) {
            let data: Vec<f32> = (0..c * w * h).map(|i| v * i as f32).collect();
            let fm = FeatureMap::new(c, w, h, 8 * w, 8 * h, data).unwrap();
            let bytes = encode_feature_map(&fm);
            let back = decode_feature_map(&mut Cursor::new(&bytes), p()).unwrap();
            prop_assert_eq!(back, fm);
        }
    }
}
