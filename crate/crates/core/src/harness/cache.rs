use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::{Array2, ArrayView2, Axis};
use sha2::{Digest, Sha256};

use crate::network::serialize_case;
use crate::network::PowerNetwork;
use crate::powerflow::{label_batch, PfConfig, PfError, SolvabilityLabel};
use crate::sampling::SamplingSpec;

type Key = [u8; 32];

/// Digests that scope cache keys to one network and one solver config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheContext {
    case: Key,
    pf: Key,
    spec: Key,
}

impl CacheContext {
    pub fn new(net: &PowerNetwork, spec: &SamplingSpec, pf: &PfConfig) -> Self {
        // Hash the canonical serialization so comments and layout in the
        // source file do not split the cache.
        let case = Sha256::digest(serialize_case(net).as_bytes()).into();
        let pf = Sha256::digest(serde_json::to_vec(pf).expect("PfConfig serializes")).into();
        let spec = Sha256::digest(spec.header().join(",").as_bytes()).into();
        CacheContext { case, pf, spec }
    }

    fn key(&self, row: &[f64]) -> Key {
        let mut h = Sha256::new();
        h.update(self.case);
        h.update(self.pf);
        h.update(self.spec);
        for v in row {
            h.update(v.to_le_bytes());
        }
        h.finalize().into()
    }
}

/// Persistent map from (case, solver config, feature row) to oracle label.
///
/// Safe to share between threads. `oracle_calls` counts rows that actually
/// went through the power flow solver.
#[derive(Debug, Default)]
pub struct LabelCache {
    path: Option<PathBuf>,
    map: Mutex<HashMap<Key, SolvabilityLabel>>,
    oracle_calls: AtomicUsize,
}

impl LabelCache {
    pub fn in_memory() -> Self {
        LabelCache::default()
    }

    /// Open a cache file, starting empty if it does not exist. Unreadable
    /// files and malformed lines are logged and skipped; the affected rows are
    /// simply recomputed.
    pub fn open(path: &Path) -> Self {
        let mut map = HashMap::new();
        match fs::read_to_string(path) {
            Ok(text) => {
                let mut bad = 0usize;
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    match parse_line(line) {
                        Some((k, v)) => {
                            map.insert(k, v);
                        }
                        None => bad += 1,
                    }
                }
                if bad > 0 {
                    log::warn!("label cache {}: skipped {bad} corrupt entries", path.display());
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => log::warn!("label cache {}: {e}; starting empty", path.display()),
        }
        LabelCache {
            path: Some(path.to_path_buf()),
            map: Mutex::new(map),
            oracle_calls: AtomicUsize::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn oracle_calls(&self) -> usize {
        self.oracle_calls.load(Ordering::Relaxed)
    }

    /// Labels for `rows` (physical units), solving only the rows not yet
    /// cached.
    pub fn label_rows(
        &self,
        net: &PowerNetwork,
        spec: &SamplingSpec,
        rows: ArrayView2<'_, f64>,
        pf: &PfConfig,
        ctx: &CacheContext,
    ) -> Result<Vec<SolvabilityLabel>, PfError> {
        let keys: Vec<Key> = rows
            .outer_iter()
            .map(|r| ctx.key(&r.to_vec()))
            .collect();
        let mut out: Vec<Option<SolvabilityLabel>> = {
            let map = self.map.lock().unwrap();
            keys.iter().map(|k| map.get(k).copied()).collect()
        };
        let misses: Vec<usize> = (0..out.len()).filter(|&i| out[i].is_none()).collect();
        if !misses.is_empty() {
            let sub: Array2<f64> = rows.select(Axis(0), &misses);
            let labels = label_batch(net, spec, sub.view(), pf).map_err(|e| match e {
                PfError::Row { index, source } => PfError::Row {
                    index: misses[index],
                    source,
                },
                e => e,
            })?;
            self.oracle_calls.fetch_add(misses.len(), Ordering::Relaxed);
            let mut map = self.map.lock().unwrap();
            for (&i, l) in misses.iter().zip(labels) {
                map.insert(keys[i], l);
                out[i] = Some(l);
            }
        }
        Ok(out.into_iter().map(|l| l.expect("every row labeled")).collect())
    }

    /// Single-row convenience form of [`LabelCache::label_rows`].
    pub fn lookup_or_label(
        &self,
        net: &PowerNetwork,
        spec: &SamplingSpec,
        row: &[f64],
        pf: &PfConfig,
        ctx: &CacheContext,
    ) -> Result<SolvabilityLabel, PfError> {
        let rows = ArrayView2::from_shape((1, row.len()), row).expect("one row");
        Ok(self.label_rows(net, spec, rows, pf, ctx)?[0])
    }

    /// Write the cache back to its file (no-op for in-memory caches).
    pub fn save(&self) -> io::Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        let mut entries: Vec<(Key, SolvabilityLabel)> =
            self.map.lock().unwrap().iter().map(|(k, v)| (*k, *v)).collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let tmp = path.with_extension("tmp");
        {
            let mut w = io::BufWriter::new(fs::File::create(&tmp)?);
            for (k, v) in entries {
                writeln!(w, "{} {}", hex::encode(k), v.class())?;
            }
            w.flush()?;
        }
        fs::rename(tmp, path)
    }
}

fn parse_line(line: &str) -> Option<(Key, SolvabilityLabel)> {
    let (k, v) = line.trim().split_once(' ')?;
    let key: Key = hex::decode(k).ok()?.try_into().ok()?;
    let label = SolvabilityLabel::from_class(v.parse().ok()?)?;
    Some((key, label))
}
