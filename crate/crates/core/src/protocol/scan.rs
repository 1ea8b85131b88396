// SPDX-License-Identifier: Apache-2.0

//! Confidentiality scan: search everything the normal world can read
//! for contiguous windows of model weights.
//!
//! The confinement target is phrased over 64-byte windows: a protocol
//! run leaks if any [`SCAN_WINDOW`]-byte substring of the weights
//! appears in normal-world-readable bytes — any normal-PAS page, any
//! shared-filesystem file, or any plaintext wire frame. Shorter
//! fragments are below the detection threshold by definition.
//!
//! The scan is exact, not probabilistic: a Rabin–Karp rolling hash
//! nominates candidate positions cheaply, and every nomination is
//! confirmed by direct byte comparison, so hash collisions cannot
//! produce false hits and misses are impossible (every window of every
//! region is hashed).
//!
//! Adjacent normal-PAS pages are physically contiguous memory, so the
//! scanner concatenates maximal runs of them into single regions —  a
//! weight window straddling two neighbouring normal pages is still a
//! leak and is still found.

use crate::world::{GranuleProtectionTable, PasTag, SecurityState};

/// Leak detection granularity in bytes.
pub const SCAN_WINDOW: usize = 64;

/// Polynomial rolling-hash base (odd, so multiplication by it is a
/// bijection on `u64`).
const BASE: u64 = 0x0000_0100_0000_01B3;

/// Bits of the prefilter bitmap (2^22 bits = 512 KiB).
const FILTER_BITS: u32 = 22;

fn window_hash(window: &[u8]) -> u64 {
    window
        .iter()
        .fold(0u64, |h, &b| h.wrapping_mul(BASE).wrapping_add(b as u64))
}

/// `BASE` raised to `SCAN_WINDOW - 1`, the multiplier of the outgoing
/// byte when rolling.
fn out_multiplier() -> u64 {
    (0..SCAN_WINDOW - 1).fold(1u64, |p, _| p.wrapping_mul(BASE))
}

/// Searchable index over every 64-byte window of one secret.
pub struct WeightIndex {
    label: String,
    weights: Vec<u8>,
    /// (window hash, window start) sorted by hash for binary search.
    windows: Vec<(u64, u32)>,
    /// One bit per low-order hash bucket; a clear bit proves absence.
    filter: Vec<u64>,
}

impl WeightIndex {
    pub fn new(label: impl Into<String>, weights: &[u8]) -> WeightIndex {
        let mut windows = Vec::new();
        let mut filter = vec![0u64; 1 << (FILTER_BITS - 6)];
        if weights.len() >= SCAN_WINDOW {
            let out = out_multiplier();
            let mut hash = window_hash(&weights[..SCAN_WINDOW]);
            for start in 0..=weights.len() - SCAN_WINDOW {
                windows.push((hash, start as u32));
                let bucket = (hash & ((1 << FILTER_BITS) - 1)) as usize;
                filter[bucket >> 6] |= 1 << (bucket & 63);
                if start + SCAN_WINDOW < weights.len() {
                    hash = hash
                        .wrapping_sub((weights[start] as u64).wrapping_mul(out))
                        .wrapping_mul(BASE)
                        .wrapping_add(weights[start + SCAN_WINDOW] as u64);
                }
            }
            windows.sort_unstable();
        }
        WeightIndex {
            label: label.into(),
            weights: weights.to_vec(),
            windows,
            filter,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Number of indexed windows: `len - 63` for secrets of 64 bytes or
    /// more, zero below the threshold.
    pub fn window_count(&self) -> usize {
        self.windows.len()
    }

    fn might_contain(&self, hash: u64) -> bool {
        let bucket = (hash & ((1 << FILTER_BITS) - 1)) as usize;
        self.filter[bucket >> 6] & (1 << (bucket & 63)) != 0
    }

    /// Confirmed weight offset for the window starting at
    /// `region[at..at + SCAN_WINDOW]`, if any.
    fn confirm(&self, region: &[u8], at: usize, hash: u64) -> Option<usize> {
        let window = &region[at..at + SCAN_WINDOW];
        let mut i = self.windows.partition_point(|&(h, _)| h < hash);
        while let Some(&(h, start)) = self.windows.get(i) {
            if h != hash {
                break;
            }
            let start = start as usize;
            if &self.weights[start..start + SCAN_WINDOW] == window {
                return Some(start);
            }
            i += 1;
        }
        None
    }

    /// All confirmed matches in `region` as
    /// `(region offset, weight offset)` pairs, in region order.
    pub fn find(&self, region: &[u8]) -> Vec<(usize, usize)> {
        let mut hits = Vec::new();
        if self.windows.is_empty() || region.len() < SCAN_WINDOW {
            return hits;
        }
        let out = out_multiplier();
        let mut hash = window_hash(&region[..SCAN_WINDOW]);
        for at in 0..=region.len() - SCAN_WINDOW {
            if self.might_contain(hash) {
                if let Some(weight_offset) = self.confirm(region, at, hash) {
                    hits.push((at, weight_offset));
                }
            }
            if at + SCAN_WINDOW < region.len() {
                hash = hash
                    .wrapping_sub((region[at] as u64).wrapping_mul(out))
                    .wrapping_mul(BASE)
                    .wrapping_add(region[at + SCAN_WINDOW] as u64);
            }
        }
        hits
    }
}

/// One confirmed leak: a weight window found in normal-world-readable
/// bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanHit {
    /// Name of the scanned region (`pages 5..12`, a file name, or a
    /// wire-frame label).
    pub region: String,
    /// Offset of the window within the region.
    pub region_offset: usize,
    /// Which secret leaked.
    pub secret: String,
    /// Offset of the window within that secret's weights.
    pub weight_offset: usize,
}

/// Outcome of a full normal-world scan.
#[derive(Debug, Clone, Default)]
pub struct ScanReport {
    pub regions_scanned: usize,
    pub bytes_scanned: u64,
    pub hits: Vec<ScanHit>,
}

impl ScanReport {
    pub fn clean(&self) -> bool {
        self.hits.is_empty()
    }

    fn scan_region(&mut self, name: &str, bytes: &[u8], secrets: &[WeightIndex]) {
        self.regions_scanned += 1;
        self.bytes_scanned += bytes.len() as u64;
        for index in secrets {
            for (region_offset, weight_offset) in index.find(bytes) {
                self.hits.push(ScanHit {
                    region: name.to_owned(),
                    region_offset,
                    secret: index.label().to_owned(),
                    weight_offset,
                });
            }
        }
    }
}

/// Scan every byte the normal world can read — maximal runs of adjacent
/// normal-PAS pages, plus the caller's extra regions (shared-filesystem
/// files, plaintext wire frames) — against every secret.
pub fn scan_normal_world(
    gpt: &GranuleProtectionTable,
    extra_regions: &[(String, Vec<u8>)],
    secrets: &[WeightIndex],
) -> ScanReport {
    let mut report = ScanReport::default();
    let mut run_start: Option<u64> = None;
    let mut run_bytes: Vec<u8> = Vec::new();
    for page in 0..=gpt.total_pages() {
        let normal = page < gpt.total_pages()
            && gpt.pas_of(page).expect("page in range") == PasTag::NormalPas;
        if normal {
            if run_start.is_none() {
                run_start = Some(page);
            }
            run_bytes.extend_from_slice(
                gpt.read_page(SecurityState::Normal, page)
                    .expect("normal page readable from normal state"),
            );
        } else if let Some(start) = run_start.take() {
            report.scan_region(&format!("pages {start}..{page}"), &run_bytes, secrets);
            run_bytes.clear();
        }
    }
    for (name, bytes) in extra_regions {
        report.scan_region(name, bytes, secrets);
    }
    report
}
