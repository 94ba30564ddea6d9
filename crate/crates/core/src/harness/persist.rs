//! On-disk formats: level tables, binary mode blocks, per-window resume
//! files and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::bim::{EigenMode, SolverConfig, Spectrum, WeylReport, WindowResult};
use crate::geometry::CurveSpec;

const MODES_MAGIC: &[u8; 8] = b"BICMODE1";

pub const LEVELS_FILE: &str = "levels.txt";
pub const MODES_FILE: &str = "modes.bin";
pub const SPECTRUM_MANIFEST: &str = "spectrum.json";
pub const WINDOW_DIR: &str = "windows";

pub const NORMALIZATION: &str =
    "u(s_j) at s_j = j L/N uniform in arclength; sum_j u^2 L/N = 1; first significant extremum positive";

pub fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    // write-then-rename so an interrupted run never leaves a truncated file
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn read_text(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String, HarnessError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Companion metadata of a persisted spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub curve: CurveSpec,
    pub resolution: usize,
    pub solver: SolverConfig,
    pub k_max: f64,
    pub perimeter: f64,
    pub area: f64,
    pub levels: usize,
    pub normalization: String,
    pub weyl: WeylReport,
}

pub fn levels_text(spectrum: &Spectrum) -> String {
    let mut out = String::from("# n k sigma_min N\n");
    for m in &spectrum.modes {
        let _ = writeln!(out, "{} {:.15} {:.6e} {}", m.index, m.k, m.sigma_min, m.index);
    }
    out
}

pub fn modes_bytes(modes: &[EigenMode]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + modes.iter().map(|m| 24 + 8 * m.samples.len()).sum::<usize>());
    out.extend_from_slice(MODES_MAGIC);
    out.extend_from_slice(&(modes.len() as u64).to_le_bytes());
    for m in modes {
        out.extend_from_slice(&(m.index as u64).to_le_bytes());
        out.extend_from_slice(&m.k.to_le_bytes());
        out.extend_from_slice(&m.sigma_min.to_le_bytes());
        out.extend_from_slice(&(m.samples.len() as u64).to_le_bytes());
        for v in &m.samples {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn modes_from_bytes(bytes: &[u8]) -> Result<Vec<EigenMode>, HarnessError> {
    let bad = |m: &str| HarnessError::Io(format!("mode block: {m}"));
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], HarnessError> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
        pos += n;
        Ok(s)
    };
    if take(8)? != MODES_MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |s: &[u8]| u64::from_le_bytes(s.try_into().expect("8 bytes"));
    let count = word(take(8)?) as usize;
    let mut modes = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let index = word(take(8)?) as usize;
        let k = f64::from_bits(word(take(8)?));
        let sigma_min = f64::from_bits(word(take(8)?));
        let len = word(take(8)?) as usize;
        let raw = take(len.checked_mul(8).ok_or_else(|| bad("length overflow"))?)?;
        let samples = raw.chunks_exact(8).map(|c| f64::from_bits(word(c))).collect();
        modes.push(EigenMode { index, k, sigma_min, samples });
    }
    Ok(modes)
}

pub fn write_spectrum(dir: &Path, spectrum: &Spectrum, meta: &SpectrumMeta) -> Result<Vec<PathBuf>, HarnessError> {
    let files = [
        (dir.join(LEVELS_FILE), levels_text(spectrum).into_bytes()),
        (dir.join(MODES_FILE), modes_bytes(&spectrum.modes)),
        (dir.join(SPECTRUM_MANIFEST), serde_json::to_vec_pretty(meta).expect("meta serializes")),
    ];
    for (p, b) in &files {
        write_file(p, b)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

pub fn read_spectrum(dir: &Path) -> Result<(Spectrum, SpectrumMeta), HarnessError> {
    let meta_path = dir.join(SPECTRUM_MANIFEST);
    let meta: SpectrumMeta =
        serde_json::from_str(&read_text(&meta_path)?).map_err(|e| io_err(&meta_path, e))?;
    let modes_path = dir.join(MODES_FILE);
    let modes = modes_from_bytes(&fs::read(&modes_path).map_err(|e| io_err(&modes_path, e))?)?;
    if modes.len() != meta.levels {
        return Err(HarnessError::Io(format!(
            "{}: {} modes but manifest lists {}",
            dir.display(),
            modes.len(),
            meta.levels
        )));
    }
    let spectrum = Spectrum {
        modes,
        k_max: meta.k_max,
        perimeter: meta.perimeter,
        area: meta.area,
        weyl: meta.weyl.clone(),
    };
    Ok((spectrum, meta))
}

/// A solved window tagged with the hash of everything that determined it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub key: String,
    pub result: WindowResult,
}

pub fn window_path(dir: &Path, k_lo: f64, k_hi: f64) -> PathBuf {
    dir.join(WINDOW_DIR).join(format!("{k_lo:010.5}_{k_hi:010.5}.json"))
}

/// Loads a window solved earlier with the same key.
pub fn load_window(path: &Path, key: &str) -> Option<WindowResult> {
    let text = fs::read_to_string(path).ok()?;
    let rec: WindowRecord = serde_json::from_str(&text).ok()?;
    (rec.key == key).then_some(rec.result)
}

pub fn store_window(path: &Path, key: &str, result: &WindowResult) -> Result<(), HarnessError> {
    let rec = WindowRecord { key: key.to_string(), result: result.clone() };
    write_file(path, serde_json::to_vec(&rec).expect("window serializes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash of the stage parameters and of its upstream stages' keys.
    pub key: String,
    pub seconds: f64,
    pub cached: bool,
    /// Relative path to sha256.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub stages: BTreeMap<String, StageRecord>,
    pub notes: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn load(dir: &Path) -> Option<Self> {
        serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?).ok()
    }

    pub fn store(&self, dir: &Path) -> Result<(), HarnessError> {
        write_file(&dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(self).expect("manifest serializes"))
    }

    /// True when the stage ran with `key` and its files are unchanged.
    pub fn is_fresh(&self, dir: &Path, stage: &str, key: &str) -> bool {
        let Some(rec) = self.stages.get(stage) else { return false };
        rec.key == key
            && rec
                .files
                .iter()
                .all(|(rel, sum)| sha256_file(&dir.join(rel)).is_ok_and(|s| &s == sum))
    }

    pub fn stages_recomputed(&self) -> usize {
        self.stages.values().filter(|s| !s.cached).count()
    }
}

pub fn checksums(dir: &Path, files: &[PathBuf]) -> Result<BTreeMap<String, String>, HarnessError> {
    files
        .iter()
        .map(|p| {
            let rel = p.strip_prefix(dir).unwrap_or(p).to_string_lossy().into_owned();
            Ok((rel, sha256_file(p)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mode(index: usize, k: f64) -> EigenMode {
        EigenMode { index, k, sigma_min: 1e-12, samples: (0..10).map(|j| (j as f64 * k).sin()).collect() }
    }

    #[test]
    fn mode_block_round_trip() {
        let modes = vec![mode(1, 2.5), mode(2, 3.25)];
        let back = modes_from_bytes(&modes_bytes(&modes)).unwrap();
        assert_eq!(back, modes);
        let bytes = modes_bytes(&modes);
        assert!(modes_from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(modes_from_bytes(b"NOTMODES\0\0\0\0\0\0\0\0").is_err());
    }

    #[test]
    fn manifest_detects_changed_files() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.txt");
        write_file(&f, "hello").unwrap();
        let mut m = Manifest::default();
        m.stages.insert(
            "s".into(),
            StageRecord { key: "k".into(), seconds: 0.0, cached: false, files: checksums(dir.path(), &[f.clone()]).unwrap() },
        );
        assert!(m.is_fresh(dir.path(), "s", "k"));
        assert!(!m.is_fresh(dir.path(), "s", "other"));
        write_file(&f, "changed").unwrap();
        assert!(!m.is_fresh(dir.path(), "s", "k"));
    }
}
