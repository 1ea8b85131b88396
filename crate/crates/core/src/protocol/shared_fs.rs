// SPDX-License-Identifier: Apache-2.0

//! Shared filesystem between the normal world and the realm: one input
//! slot, one output slot, and a 1-byte readiness flag.
//!
//! Two interchangeable backends:
//!
//! - **Pages** — slots live in normal-PAS granules, every access goes
//!   through the granule protection table as an explicit requester, so
//!   the usual access rules apply (both worlds may touch normal pages).
//!   This is the in-memory stand-in for a shared-filesystem mount.
//! - **Dir** — slots persist as `input.bin`, `output.bin`, and
//!   `ready.flag` in a host directory. Files model the same normal-PAS
//!   storage, so any requester may access them; the `gpt` and requester
//!   arguments are accepted for call-shape parity and ignored.
//!
//! Exchange is single-slot and polled: a producer fills a slot, the
//! consumer takes (reads and clears) it. Slot presence *is* the signal;
//! there is no queueing. Model weights must never pass through here —
//! the confidentiality scan treats these bytes as normal-world visible.

use std::fmt;
use std::fs;
use std::path::PathBuf;

use crate::world::{GranuleProtectionTable, SecurityState, WorldError, PAGE_SIZE};

/// Bytes of slot header: 1 presence byte + 4-byte big-endian length.
const SLOT_HEADER: usize = 5;

const INPUT_FILE: &str = "input.bin";
const OUTPUT_FILE: &str = "output.bin";
const READY_FILE: &str = "ready.flag";

/// Shared-filesystem failure.
#[derive(Debug)]
pub enum SharedFsError {
    /// Underlying page access was denied or out of range.
    World(WorldError),
    /// Filesystem backend failure.
    Io(std::io::Error),
    /// Payload exceeds the slot's capacity.
    SlotTooLarge { len: usize, capacity: usize },
    /// A backing page is not normal-PAS (or is listed twice).
    BadBackingPage { page: u64, reason: &'static str },
}

impl fmt::Display for SharedFsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SharedFsError::World(err) => write!(f, "{err}"),
            SharedFsError::Io(err) => write!(f, "io: {err}"),
            SharedFsError::SlotTooLarge { len, capacity } => {
                write!(f, "{len}-byte payload exceeds slot capacity of {capacity}")
            }
            SharedFsError::BadBackingPage { page, reason } => {
                write!(f, "page {page} cannot back a shared slot: {reason}")
            }
        }
    }
}

impl std::error::Error for SharedFsError {}

impl From<WorldError> for SharedFsError {
    fn from(err: WorldError) -> SharedFsError {
        SharedFsError::World(err)
    }
}

impl From<std::io::Error> for SharedFsError {
    fn from(err: std::io::Error) -> SharedFsError {
        SharedFsError::Io(err)
    }
}

enum Backend {
    Pages {
        input: Vec<u64>,
        output: Vec<u64>,
        flag: u64,
    },
    Dir(PathBuf),
}

/// The two slots plus readiness flag; see the module docs.
pub struct SharedFs {
    backend: Backend,
}

/// Which slot an operation addresses.
#[derive(Clone, Copy)]
enum Slot {
    Input,
    Output,
}

impl SharedFs {
    /// Back the slots with normal-PAS granules: `input` and `output`
    /// each hold one slot (5-byte header + payload), `flag` holds the
    /// readiness byte. All pages must be distinct and normal-PAS.
    pub fn pages(
        gpt: &GranuleProtectionTable,
        input: Vec<u64>,
        output: Vec<u64>,
        flag: u64,
    ) -> Result<SharedFs, SharedFsError> {
        let mut seen = std::collections::BTreeSet::new();
        for &page in input.iter().chain(output.iter()).chain([flag].iter()) {
            if !seen.insert(page) {
                return Err(SharedFsError::BadBackingPage {
                    page,
                    reason: "page listed twice",
                });
            }
            if gpt.pas_of(page)? != crate::world::PasTag::NormalPas {
                return Err(SharedFsError::BadBackingPage {
                    page,
                    reason: "not a normal-PAS page",
                });
            }
        }
        Ok(SharedFs {
            backend: Backend::Pages {
                input,
                output,
                flag,
            },
        })
    }

    /// Back the slots with files in `dir` (created if absent).
    pub fn dir(dir: impl Into<PathBuf>) -> Result<SharedFs, SharedFsError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(SharedFs {
            backend: Backend::Dir(dir),
        })
    }

    /// Payload bytes one slot can hold.
    pub fn slot_capacity(&self) -> usize {
        match &self.backend {
            Backend::Pages { input, .. } => input.len() * PAGE_SIZE - SLOT_HEADER,
            Backend::Dir(_) => usize::MAX,
        }
    }

    /// Every page backing the shared region, for registration as a
    /// realm's unprotected region. Empty for the directory backend.
    pub fn backing_pages(&self) -> Vec<u64> {
        match &self.backend {
            Backend::Pages {
                input,
                output,
                flag,
            } => {
                let mut pages = input.clone();
                pages.extend_from_slice(output);
                pages.push(*flag);
                pages
            }
            Backend::Dir(_) => Vec::new(),
        }
    }

    /// Byte regions the granule scan cannot see: the backing files of
    /// the directory backend. (Page-backed slots already sit in
    /// normal-PAS granules the scan walks directly.)
    pub fn extra_scan_regions(&self) -> Result<Vec<(String, Vec<u8>)>, SharedFsError> {
        match &self.backend {
            Backend::Pages { .. } => Ok(Vec::new()),
            Backend::Dir(dir) => {
                let mut regions = Vec::new();
                for name in [INPUT_FILE, OUTPUT_FILE, READY_FILE] {
                    let path = dir.join(name);
                    if path.exists() {
                        regions.push((name.to_owned(), fs::read(&path)?));
                    }
                }
                Ok(regions)
            }
        }
    }

    fn slot_pages(&self, slot: Slot) -> &[u64] {
        match (&self.backend, slot) {
            (Backend::Pages { input, .. }, Slot::Input) => input,
            (Backend::Pages { output, .. }, Slot::Output) => output,
            (Backend::Dir(_), _) => &[],
        }
    }

    fn slot_file(dir: &std::path::Path, slot: Slot) -> PathBuf {
        match slot {
            Slot::Input => dir.join(INPUT_FILE),
            Slot::Output => dir.join(OUTPUT_FILE),
        }
    }

    fn write_slot(
        &self,
        gpt: &mut GranuleProtectionTable,
        requester: SecurityState,
        slot: Slot,
        data: &[u8],
    ) -> Result<(), SharedFsError> {
        match &self.backend {
            Backend::Pages { .. } => {
                let pages = self.slot_pages(slot);
                let capacity = pages.len() * PAGE_SIZE - SLOT_HEADER;
                if data.len() > capacity {
                    return Err(SharedFsError::SlotTooLarge {
                        len: data.len(),
                        capacity,
                    });
                }
                // Full-slot image: header, payload, zero fill. Writing
                // whole pages clears any stale tail from earlier, longer
                // payloads.
                let mut image = vec![0u8; pages.len() * PAGE_SIZE];
                image[0] = 1;
                image[1..5].copy_from_slice(&(data.len() as u32).to_be_bytes());
                image[SLOT_HEADER..SLOT_HEADER + data.len()].copy_from_slice(data);
                for (chunk, &page) in image.chunks(PAGE_SIZE).zip(pages) {
                    gpt.write_page(requester, page, chunk)?;
                }
                Ok(())
            }
            Backend::Dir(dir) => {
                fs::write(Self::slot_file(dir, slot), data)?;
                Ok(())
            }
        }
    }

    fn take_slot(
        &self,
        gpt: &mut GranuleProtectionTable,
        requester: SecurityState,
        slot: Slot,
    ) -> Result<Option<Vec<u8>>, SharedFsError> {
        match &self.backend {
            Backend::Pages { .. } => {
                let pages = self.slot_pages(slot);
                let mut image = Vec::with_capacity(pages.len() * PAGE_SIZE);
                for &page in pages {
                    image.extend_from_slice(gpt.read_page(requester, page)?);
                }
                if image.first() != Some(&1) {
                    return Ok(None);
                }
                let len = u32::from_be_bytes(image[1..5].try_into().expect("4 bytes")) as usize;
                let data = image[SLOT_HEADER..SLOT_HEADER + len].to_vec();
                // Consume: clear the presence header so the producer can
                // refill the slot.
                gpt.write_page(requester, pages[0], &[0u8; SLOT_HEADER])?;
                Ok(Some(data))
            }
            Backend::Dir(dir) => {
                let path = Self::slot_file(dir, slot);
                if !path.exists() {
                    return Ok(None);
                }
                let data = fs::read(&path)?;
                fs::remove_file(&path)?;
                Ok(Some(data))
            }
        }
    }

    /// Producer side of the input slot (normal world writes a query).
    pub fn write_input(
        &self,
        gpt: &mut GranuleProtectionTable,
        requester: SecurityState,
        data: &[u8],
    ) -> Result<(), SharedFsError> {
        self.write_slot(gpt, requester, Slot::Input, data)
    }

    /// Consumer side of the input slot (realm takes the query).
    pub fn take_input(
        &self,
        gpt: &mut GranuleProtectionTable,
        requester: SecurityState,
    ) -> Result<Option<Vec<u8>>, SharedFsError> {
        self.take_slot(gpt, requester, Slot::Input)
    }

    /// Producer side of the output slot (realm writes the answer).
    pub fn write_output(
        &self,
        gpt: &mut GranuleProtectionTable,
        requester: SecurityState,
        data: &[u8],
    ) -> Result<(), SharedFsError> {
        self.write_slot(gpt, requester, Slot::Output, data)
    }

    /// Consumer side of the output slot (normal world takes the answer).
    pub fn take_output(
        &self,
        gpt: &mut GranuleProtectionTable,
        requester: SecurityState,
    ) -> Result<Option<Vec<u8>>, SharedFsError> {
        self.take_slot(gpt, requester, Slot::Output)
    }

    /// Raise or clear the 1-byte readiness flag (step 6 announcement).
    pub fn set_ready(
        &self,
        gpt: &mut GranuleProtectionTable,
        requester: SecurityState,
        ready: bool,
    ) -> Result<(), SharedFsError> {
        match &self.backend {
            Backend::Pages { flag, .. } => {
                gpt.write_page(requester, *flag, &[u8::from(ready)])?;
                Ok(())
            }
            Backend::Dir(dir) => {
                fs::write(dir.join(READY_FILE), [u8::from(ready)])?;
                Ok(())
            }
        }
    }

    pub fn is_ready(
        &self,
        gpt: &GranuleProtectionTable,
        requester: SecurityState,
    ) -> Result<bool, SharedFsError> {
        match &self.backend {
            Backend::Pages { flag, .. } => {
                Ok(gpt.read_page(requester, *flag)?[0] == 1)
            }
            Backend::Dir(dir) => {
                let path = dir.join(READY_FILE);
                Ok(path.exists() && fs::read(&path)? == [1])
            }
        }
    }
}
