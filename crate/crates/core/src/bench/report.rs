//! Stage timing and storage reports.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const TIMING_HEADER: [&str; 5] = [
    "descriptor_calculation",
    "database_search",
    "local_feature_calculation",
    "re_ranking",
    "local_alignment",
];

pub const STORAGE_HEADER: [&str; 3] = ["artifact", "files", "bytes"];

/// Mean wall-clock seconds per query for each online stage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTiming {
    pub descriptor_calculation: f64,
    pub database_search: f64,
    pub local_feature_calculation: f64,
    pub re_ranking: f64,
    pub local_alignment: f64,
}

impl StageTiming {
    pub fn from_array(s: [f64; 5]) -> Self {
        Self {
            descriptor_calculation: s[0],
            database_search: s[1],
            local_feature_calculation: s[2],
            re_ranking: s[3],
            local_alignment: s[4],
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.descriptor_calculation,
            self.database_search,
            self.local_feature_calculation,
            self.re_ranking,
            self.local_alignment,
        ]
    }

    /// Per-stage mean over queries; all zeros for an empty input.
    pub fn mean(per_query: impl IntoIterator<Item = [f64; 5]>) -> Self {
        let mut sum = [0.0; 5];
        let mut n = 0usize;
        for s in per_query {
            for (acc, v) in sum.iter_mut().zip(s) {
                *acc += v.max(0.0);
            }
            n += 1;
        }
        if n > 0 {
            sum.iter_mut().for_each(|v| *v /= n as f64);
        }
        Self::from_array(sum)
    }

    pub fn total(&self) -> f64 {
        self.as_array().iter().sum()
    }

    /// Header plus one row, seconds to two decimals.
    pub fn to_csv(&self) -> String {
        let values: Vec<String> = self.as_array().iter().map(|v| format!("{v:.2}")).collect();
        format!("{}\n{}\n", TIMING_HEADER.join(","), values.join(","))
    }
}

/// Size of one stored artifact kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageEntry {
    pub artifact: String,
    pub files: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StorageReport {
    pub entries: Vec<StorageEntry>,
}

impl StorageReport {
    /// Adds an entry measuring a single file or every regular file in a
    /// directory.
    pub fn measure(&mut self, artifact: &str, path: &Path) -> Result<()> {
        let (files, bytes) = if path.is_dir() {
            let mut files = 0;
            let mut bytes = 0;
            for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
                let entry = entry.map_err(|e| Error::io(path, e))?;
                let meta = entry.metadata().map_err(|e| Error::io(&entry.path(), e))?;
                if meta.is_file() {
                    files += 1;
                    bytes += meta.len();
                }
            }
            (files, bytes)
        } else {
            let meta = fs::metadata(path)
                .map_err(|_| Error::Artifact(format!("missing artifact {}", path.display())))?;
            (1, meta.len())
        };
        self.entries.push(StorageEntry {
            artifact: artifact.to_string(),
            files,
            bytes,
        });
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = STORAGE_HEADER.join(",");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.artifact, e.files, e.bytes));
        }
        out
    }
}
