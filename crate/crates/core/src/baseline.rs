//! Baseline training on an attack-free stream.
//!
//! Walks the training windows in order, growing the old-user bitmap and
//! tracking the running maximum per-window old-user count and the mean
//! per-window new-user count. The first window bootstraps: all of its
//! sources count toward the maximum and none toward the new-user mean.
//! After training the old-user set is frozen; detection never merges
//! observed sources into it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::WeightVector;
use crate::ipd::IpBitmap;
use crate::prefilter::FilteredWindow;

pub const BASELINE_FORMAT: u32 = 1;

#[derive(Clone)]
pub struct Baseline {
    pub old_users: IpBitmap,
    /// Maximum per-window old-user count seen during training.
    pub max_old_users: u64,
    /// Mean per-window new-user count over training windows 2..k.
    pub mean_new_users: f64,
    pub unit_time: f64,
    pub weights: WeightVector,
    pub window_count: usize,
}

impl std::fmt::Debug for Baseline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Baseline")
            .field("marked", &self.old_users.count_marked())
            .field("max_old_users", &self.max_old_users)
            .field("mean_new_users", &self.mean_new_users)
            .field("unit_time", &self.unit_time)
            .field("window_count", &self.window_count)
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
struct BaselineHeader {
    format: u32,
    unit_time: f64,
    max_old_users: u64,
    mean_new_users: f64,
    weights: WeightVector,
    window_count: usize,
    /// IPD snapshot, relative to the header file.
    ipd_path: String,
}

/// Train a baseline over filtered windows of a trusted normal stream.
///
/// `bitmap_bits` selects the membership store width (32 = direct IPv4 map).
pub fn train(windows: &[FilteredWindow], unit_time: f64, bitmap_bits: u32) -> Result<Baseline> {
    Ok(train_with_feature_rows(windows, unit_time, bitmap_bits)?.0)
}

/// Like [`train`], but also returns each window's feature vector scored
/// against the baseline state as it stood BEFORE that window was merged
/// (windows 2..k; window 1 has no mean to compare against). These rows feed
/// the principal-component weight estimate.
pub fn train_with_feature_rows(
    windows: &[FilteredWindow],
    unit_time: f64,
    bitmap_bits: u32,
) -> Result<(Baseline, Vec<crate::features::FeatureVector>)> {
    if windows.is_empty() {
        return Err(Error::Training("empty training window sequence".into()));
    }
    let mut old_users = IpBitmap::with_bits(bitmap_bits)?;
    let mut max_old_users = 0u64;
    let mut new_total = 0u64;
    let mut rows = Vec::new();

    for (i, window) in windows.iter().enumerate() {
        let sources = window.sources();
        if i == 0 {
            max_old_users = sources.len() as u64;
        } else {
            if i >= 2 {
                let running_mean = new_total as f64 / (i - 1) as f64;
                rows.push(crate::features::feature_vector_raw(
                    window,
                    &old_users,
                    max_old_users,
                    running_mean,
                    unit_time,
                    crate::features::DEFAULT_A_CAP,
                ));
            }
            let old = sources
                .iter()
                .filter(|&&s| old_users.is_marked(s))
                .count() as u64;
            max_old_users = max_old_users.max(old);
            new_total += sources.len() as u64 - old;
        }
        for &s in &sources {
            old_users.mark(s);
        }
    }

    // Window 1 is excluded from the mean: every user there is new by
    // definition and would inflate it arbitrarily.
    let mean_new_users = if windows.len() > 1 {
        new_total as f64 / (windows.len() - 1) as f64
    } else {
        0.0
    };

    Ok((
        Baseline {
            old_users,
            max_old_users,
            mean_new_users,
            unit_time,
            weights: WeightVector::EQUAL,
            window_count: windows.len(),
        },
        rows,
    ))
}

/// Window, filter, and train in one pass over a raw record stream.
/// `filtered = false` is the ablation path (training on unfiltered windows).
pub fn train_from_records(
    records: &[crate::flow::PacketRecord],
    unit_time: f64,
    bitmap_bits: u32,
    filtered: bool,
) -> Result<Baseline> {
    let cfg = crate::flow::SamplingConfig::new(unit_time, crate::flow::StreamRole::Training)?;
    let windows = crate::flow::window_stream(records, &cfg);
    let filtered_windows: Vec<FilteredWindow> = windows
        .iter()
        .map(|w| {
            if filtered {
                crate::prefilter::filter_window(w)
            } else {
                crate::prefilter::unfiltered_window(w)
            }
        })
        .collect();
    train(&filtered_windows, unit_time, bitmap_bits)
}

impl Baseline {
    /// Write the JSON header at `path` and the bitmap snapshot next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let ipd_name = format!(
            "{}.ipd",
            path.file_stem().and_then(|s| s.to_str()).unwrap_or("baseline")
        );
        let header = BaselineHeader {
            format: BASELINE_FORMAT,
            unit_time: self.unit_time,
            max_old_users: self.max_old_users,
            mean_new_users: self.mean_new_users,
            weights: self.weights,
            window_count: self.window_count,
            ipd_path: ipd_name.clone(),
        };
        fs::write(path, serde_json::to_vec_pretty(&header)?)?;
        let ipd_full = path.with_file_name(ipd_name);
        let mut f = fs::File::create(ipd_full)?;
        self.old_users.save(&mut f)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read(path)?;
        let header: BaselineHeader = serde_json::from_slice(&raw)
            .map_err(|e| Error::CorruptFile(format!("baseline header: {e}")))?;
        if header.format != BASELINE_FORMAT {
            return Err(Error::VersionMismatch(format!(
                "baseline format {} (expected {BASELINE_FORMAT})",
                header.format
            )));
        }
        let ipd_full = path.with_file_name(&header.ipd_path);
        let f = fs::File::open(&ipd_full)?;
        let old_users = IpBitmap::load(std::io::BufReader::new(f))?;
        Ok(Baseline {
            old_users,
            max_old_users: header.max_old_users,
            mean_new_users: header.mean_new_users,
            unit_time: header.unit_time,
            weights: header.weights,
            window_count: header.window_count,
        })
    }
}
