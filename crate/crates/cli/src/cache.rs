//! On-disk checkpoint of sampled blocks so interrupted runs resume.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use polymer::mc::BlockCache;

/// One file per block: little-endian u64 row count, u64 width, then f64 values
/// row-major. Writes go through a temporary file and a rename.
pub struct FileCache {
    dir: PathBuf,
}

impl FileCache {
    pub fn new(dir: PathBuf) -> std::io::Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn path(&self, key: &str) -> PathBuf {
        let safe: String = key.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect();
        self.dir.join(format!("{safe}.blk"))
    }
}

fn word(bytes: &[u8], i: usize) -> Option<[u8; 8]> {
    bytes.get(8 * i..8 * i + 8)?.try_into().ok()
}

impl BlockCache for FileCache {
    fn load(&self, key: &str) -> Option<Vec<Vec<f64>>> {
        let bytes = fs::read(self.path(key)).ok()?;
        let rows = u64::from_le_bytes(word(&bytes, 0)?) as usize;
        let width = u64::from_le_bytes(word(&bytes, 1)?) as usize;
        if bytes.len() != 8 * (2 + rows * width) {
            return None;
        }
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            out.push((0..width).map(|c| f64::from_le_bytes(word(&bytes, 2 + r * width + c).unwrap())).collect());
        }
        Some(out)
    }

    fn store(&self, key: &str, block: &[Vec<f64>]) {
        let width = block.first().map_or(0, Vec::len);
        let mut bytes = Vec::with_capacity(8 * (2 + block.len() * width));
        bytes.extend((block.len() as u64).to_le_bytes());
        bytes.extend((width as u64).to_le_bytes());
        for row in block {
            for v in row {
                bytes.extend(v.to_le_bytes());
            }
        }
        let path = self.path(key);
        let tmp = path.with_extension("tmp");
        // a failed checkpoint only costs recomputation
        let ok = fs::File::create(&tmp).and_then(|mut f| f.write_all(&bytes)).is_ok();
        if ok {
            let _ = fs::rename(&tmp, &path);
        }
    }
}
