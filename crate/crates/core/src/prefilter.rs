//! Many-to-one flow reduction.
//!
//! Packets are grouped into (source, destination) classes, then two delete
//! rules run once each, in order:
//!
//! 1. a source that talks to two or more distinct destinations loses all of
//!    its classes;
//! 2. a destination left with classes from exactly one source loses those
//!    classes.
//!
//! What survives is the many-to-one traffic: several distinct sources all
//! targeting the same destination.

use std::collections::{HashMap, HashSet};

use crate::flow::WindowSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowClass {
    pub src_ip: u32,
    pub dst_ip: u32,
    pub packet_count: u64,
}

#[derive(Debug, Clone)]
pub struct FilteredWindow {
    pub index: usize,
    pub start: f64,
    pub classes: Vec<FlowClass>,
    /// Per-source packet counts restricted to surviving classes.
    pub access_counts: HashMap<u32, u64>,
}

impl FilteredWindow {
    /// Distinct surviving source addresses.
    pub fn sources(&self) -> HashSet<u32> {
        self.classes.iter().map(|c| c.src_ip).collect()
    }

    pub fn total_packets(&self) -> u64 {
        self.classes.iter().map(|c| c.packet_count).sum()
    }
}

/// Group a window's packets into one class per distinct (src, dst) pair.
pub fn classify(window: &WindowSample) -> Vec<FlowClass> {
    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    for r in &window.records {
        *counts.entry((r.src_ip, r.dst_ip)).or_insert(0) += 1;
    }
    let mut classes: Vec<FlowClass> = counts
        .into_iter()
        .map(|((src_ip, dst_ip), packet_count)| FlowClass {
            src_ip,
            dst_ip,
            packet_count,
        })
        .collect();
    classes.sort_by_key(|c| (c.src_ip, c.dst_ip));
    classes
}

/// Apply the two delete rules, once each; the result is many-to-one only.
pub fn apply_delete_rules(index: usize, start: f64, classes: &[FlowClass]) -> FilteredWindow {
    // Rule 1: drop every class of any source with >= 2 distinct destinations.
    let mut dsts_per_src: HashMap<u32, HashSet<u32>> = HashMap::new();
    for c in classes {
        dsts_per_src.entry(c.src_ip).or_default().insert(c.dst_ip);
    }
    let after_rule1: Vec<FlowClass> = classes
        .iter()
        .filter(|c| dsts_per_src[&c.src_ip].len() == 1)
        .copied()
        .collect();

    // Rule 2: drop classes of any destination with a single distinct source.
    let mut srcs_per_dst: HashMap<u32, HashSet<u32>> = HashMap::new();
    for c in &after_rule1 {
        srcs_per_dst.entry(c.dst_ip).or_default().insert(c.src_ip);
    }
    let survivors: Vec<FlowClass> = after_rule1
        .into_iter()
        .filter(|c| srcs_per_dst[&c.dst_ip].len() >= 2)
        .collect();

    let mut access_counts = HashMap::new();
    for c in &survivors {
        *access_counts.entry(c.src_ip).or_insert(0) += c.packet_count;
    }

    let out = FilteredWindow {
        index,
        start,
        classes: survivors,
        access_counts,
    };
    debug_assert!(is_many_to_one(&out.classes));
    out
}

/// Convenience: classify + delete rules on a raw window.
pub fn filter_window(window: &WindowSample) -> FilteredWindow {
    let classes = classify(window);
    apply_delete_rules(window.index, window.start, &classes)
}

/// Pass-through used by the `--no-filter` ablation: every class survives.
pub fn unfiltered_window(window: &WindowSample) -> FilteredWindow {
    let classes = classify(window);
    let mut access_counts = HashMap::new();
    for c in &classes {
        *access_counts.entry(c.src_ip).or_insert(0) += c.packet_count;
    }
    FilteredWindow {
        index: window.index,
        start: window.start,
        classes,
        access_counts,
    }
}

/// Check the many-to-one postcondition by full re-scan.
pub fn is_many_to_one(classes: &[FlowClass]) -> bool {
    let mut dsts_per_src: HashMap<u32, HashSet<u32>> = HashMap::new();
    let mut srcs_per_dst: HashMap<u32, HashSet<u32>> = HashMap::new();
    for c in classes {
        dsts_per_src.entry(c.src_ip).or_default().insert(c.dst_ip);
        srcs_per_dst.entry(c.dst_ip).or_default().insert(c.src_ip);
    }
    dsts_per_src.values().all(|d| d.len() == 1) && srcs_per_dst.values().all(|s| s.len() >= 2)
}
