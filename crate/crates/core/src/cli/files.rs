use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::measurement::{
    setting_seed, ControlGrid, DataMode, DetectorModel, SettingData, SettingRecord, SumFieldDataset,
};
use crate::state::FieldScale;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.csv";
const DATASET_FORMAT: &str = "homotomo-dataset";
const DATASET_VERSION: u32 = 1;

/// Writes through a sibling temporary file, then renames it into place.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| Error::format(path, format!("{}: {}", e.path(), e.inner())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub n_modes: usize,
    pub field_scale: FieldScale,
    pub detector: DetectorModel,
    pub seed: u64,
    pub samples_per_setting: usize,
    pub mode: DataMode,
    pub n_settings: usize,
    pub control: ControlGrid,
    pub data_file: String,
    /// Hex SHA-256 of the data file.
    pub data_sha256: String,
    pub config_hash: Option<String>,
    /// Effective configuration the dataset was generated from.
    pub config: Option<RunConfig>,
}

struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `{:.16e}`: 17 significant digits, enough to round-trip every f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `dir/manifest.json` and `dir/data.csv`.
///
/// The CSV has one row per sample, bin count, or bin density:
/// `setting,k,value` with `setting` the flat setting index.
pub fn write_dataset(dir: &Path, ds: &SumFieldDataset, config: Option<&RunConfig>) -> Result<DatasetManifest> {
    ds.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let data_path = dir.join(DATA_FILE);
    let mut digest = String::new();
    write_atomic(&data_path, |w| {
        let mut hw = HashingWriter {
            inner: w,
            hasher: Sha256::new(),
        };
        {
            let mut csv = csv::Writer::from_writer(&mut hw);
            csv.write_record(["setting", "k", "value"])?;
            for (flat, r) in ds.records.iter().enumerate() {
                let s = flat.to_string();
                match &r.data {
                    SettingData::Samples(v) | SettingData::Density(v) => {
                        for (k, x) in v.iter().enumerate() {
                            csv.write_record([s.as_str(), &k.to_string(), &fmt_f64(*x)])?;
                        }
                    }
                    SettingData::Counts(c) => {
                        for (k, x) in c.iter().enumerate() {
                            csv.write_record([s.as_str(), &k.to_string(), &x.to_string()])?;
                        }
                    }
                }
            }
            csv.flush()?;
        }
        digest = hex(&hw.hasher.finalize());
        Ok(())
    })?;
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        n_modes: ds.n_modes,
        field_scale: ds.field_scale,
        detector: ds.detector,
        seed: ds.seed,
        samples_per_setting: ds.samples_per_setting,
        mode: ds.mode,
        n_settings: ds.records.len(),
        control: ds.control.clone(),
        data_file: DATA_FILE.into(),
        data_sha256: digest,
        config_hash: config.map(RunConfig::hash),
        config: config.cloned(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn file_sha256(path: &Path) -> Result<String> {
    let mut f = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex(&h.finalize()))
}

/// Reads a dataset directory written by [`write_dataset`], checking the
/// data digest and every record against the manifest.
pub fn read_dataset(dir: &Path) -> Result<(SumFieldDataset, DatasetManifest)> {
    let mpath = dir.join(MANIFEST_FILE);
    let m: DatasetManifest = read_json(&mpath)?;
    if m.format != DATASET_FORMAT || m.version != DATASET_VERSION {
        return Err(Error::format(
            &mpath,
            format!("unsupported dataset format {} v{}", m.format, m.version),
        ));
    }
    m.control.validate().map_err(|e| Error::format(&mpath, e.to_string()))?;
    if m.n_settings != m.control.n_settings() {
        return Err(Error::format(&mpath, "n_settings disagrees with the control grid"));
    }
    let dpath = dir.join(&m.data_file);
    let digest = file_sha256(&dpath)?;
    if digest != m.data_sha256 {
        return Err(Error::format(&dpath, "data file digest does not match the manifest"));
    }

    let n = m.n_settings;
    let bins = m.control.quadrature_grid.n_bins();
    let per = match m.mode {
        DataMode::Samples => m.samples_per_setting,
        _ => bins,
    };
    let mut floats: Vec<Vec<f64>> = vec![Vec::with_capacity(per); n];
    let mut counts: Vec<Vec<u64>> = vec![Vec::with_capacity(per); n];
    let bad = |line: u64, msg: &str| Error::format(&dpath, format!("line {line}: {msg}"));
    let mut rdr = csv::Reader::from_reader(BufReader::new(
        File::open(&dpath).map_err(|e| Error::io(&dpath, e))?,
    ));
    let header = rdr.headers().map_err(|e| Error::format(&dpath, e.to_string()))?;
    if header != vec!["setting", "k", "value"] {
        return Err(Error::format(&dpath, "expected header setting,k,value"));
    }
    let mut row = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(Error::format(&dpath, e.to_string())),
        }
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(bad(line, "expected 3 fields"));
        }
        let s: usize = row[0].parse().map_err(|_| bad(line, "bad setting index"))?;
        let k: usize = row[1].parse().map_err(|_| bad(line, "bad position"))?;
        if s >= n {
            return Err(bad(line, "setting index out of range"));
        }
        let filled = match m.mode {
            DataMode::Histogram => counts[s].len(),
            _ => floats[s].len(),
        };
        if k != filled {
            return Err(bad(line, "rows out of order"));
        }
        match m.mode {
            DataMode::Histogram => counts[s].push(row[2].parse().map_err(|_| bad(line, "bad count"))?),
            _ => floats[s].push(row[2].parse().map_err(|_| bad(line, "bad value"))?),
        }
    }
    let records = (0..n)
        .map(|flat| {
            let index = m.control.setting_digits(flat);
            let data = match m.mode {
                DataMode::Samples => SettingData::Samples(std::mem::take(&mut floats[flat])),
                DataMode::Histogram => SettingData::Counts(std::mem::take(&mut counts[flat])),
                DataMode::Analytic => SettingData::Density(std::mem::take(&mut floats[flat])),
            };
            SettingRecord {
                seed: setting_seed(m.seed, &index),
                index,
                data,
            }
        })
        .collect();
    let ds = SumFieldDataset {
        n_modes: m.n_modes,
        field_scale: m.field_scale,
        detector: m.detector,
        seed: m.seed,
        samples_per_setting: m.samples_per_setting,
        mode: m.mode,
        control: m.control.clone(),
        records,
    };
    ds.validate().map_err(|e| Error::format(&dpath, e.to_string()))?;
    Ok((ds, m))
}
