// SPDX-License-Identifier: Apache-2.0

//! Security states, physical address spaces, the granule protection check,
//! and page delegation.
//!
//! The machine is modeled as four *worlds* (security states) and a flat
//! physical address space cut into 4 KiB granules. Every granule carries a
//! physical-address-space (PAS) tag, and every memory access is admitted or
//! refused by the granule protection check: a pure function of the
//! requester's security state and the target granule's tag. The
//! [`GranuleProtectionTable`] is the isolation ground truth — the only way a
//! granule changes tag is through [`GranuleProtectionTable::delegate`] /
//! [`GranuleProtectionTable::undelegate`], both of which demand Root context
//! (the monitor firmware mediates all retagging).
//!
//! Undelegation scrubs: a page leaving realm or secure space is zero-filled
//! before the normal world can see it again, so no confidential residue
//! survives reclaim.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Granule (and translation) size in bytes. Fixed at the standard 4 KiB
/// granule; only page counts and ratios matter at this scale.
pub const PAGE_SIZE: usize = 4096;

/// Processor security state — the world the core is executing in.
///
/// Access rights are matrix-defined (see [`gpc_check`]), not hierarchical:
/// no total order of privilege is implied by the enum order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecurityState {
    /// Non-secure world: hypervisor, host OS, ordinary applications.
    Normal,
    /// TrustZone secure world (carried for matrix completeness; no secure
    /// software stack is modeled).
    Secure,
    /// Realm world: confidential VMs and the realm management monitor.
    Realm,
    /// Root world: the EL3 monitor firmware owning the GPT.
    Root,
}

impl SecurityState {
    /// All four states, in declaration order.
    pub const ALL: [SecurityState; 4] = [
        SecurityState::Normal,
        SecurityState::Secure,
        SecurityState::Realm,
        SecurityState::Root,
    ];

    /// Two-letter code used in trace files: `NS`, `S`, `RL`, `RT`.
    pub fn code(self) -> &'static str {
        match self {
            SecurityState::Normal => "NS",
            SecurityState::Secure => "S",
            SecurityState::Realm => "RL",
            SecurityState::Root => "RT",
        }
    }

    /// Inverse of [`SecurityState::code`].
    pub fn from_code(code: &str) -> Option<SecurityState> {
        Some(match code {
            "NS" => SecurityState::Normal,
            "S" => SecurityState::Secure,
            "RL" => SecurityState::Realm,
            "RT" => SecurityState::Root,
            _ => return None,
        })
    }
}

impl fmt::Display for SecurityState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SecurityState::Normal => "normal",
            SecurityState::Secure => "secure",
            SecurityState::Realm => "realm",
            SecurityState::Root => "root",
        };
        f.write_str(name)
    }
}

/// Exception level of the executing core. EL0 is least privileged; EL3 is
/// reached only in Root-state contexts (the monitor).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExceptionLevel {
    /// Applications / inference code.
    El0,
    /// Guest kernel.
    El1,
    /// Hypervisor (normal world) or realm management monitor (realm world).
    El2,
    /// Monitor firmware.
    El3,
}

impl ExceptionLevel {
    /// All four levels, lowest first.
    pub const ALL: [ExceptionLevel; 4] = [
        ExceptionLevel::El0,
        ExceptionLevel::El1,
        ExceptionLevel::El2,
        ExceptionLevel::El3,
    ];

    /// Code used in trace files: `EL0` … `EL3`.
    pub fn code(self) -> &'static str {
        match self {
            ExceptionLevel::El0 => "EL0",
            ExceptionLevel::El1 => "EL1",
            ExceptionLevel::El2 => "EL2",
            ExceptionLevel::El3 => "EL3",
        }
    }

    /// Inverse of [`ExceptionLevel::code`].
    pub fn from_code(code: &str) -> Option<ExceptionLevel> {
        Some(match code {
            "EL0" => ExceptionLevel::El0,
            "EL1" => ExceptionLevel::El1,
            "EL2" => ExceptionLevel::El2,
            "EL3" => ExceptionLevel::El3,
            _ => return None,
        })
    }
}

impl fmt::Display for ExceptionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Physical-address-space tag. Every granule has exactly one tag at any time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PasTag {
    NormalPas,
    SecurePas,
    RealmPas,
    RootPas,
}

impl PasTag {
    /// All four tags, in declaration order.
    pub const ALL: [PasTag; 4] = [
        PasTag::NormalPas,
        PasTag::SecurePas,
        PasTag::RealmPas,
        PasTag::RootPas,
    ];
}

impl fmt::Display for PasTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PasTag::NormalPas => "normal-pas",
            PasTag::SecurePas => "secure-pas",
            PasTag::RealmPas => "realm-pas",
            PasTag::RootPas => "root-pas",
        };
        f.write_str(name)
    }
}

/// Outcome of a granule protection check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessDecision {
    Allow,
    Deny,
}

/// The granule protection check: may `requester` touch memory tagged
/// `target`?
///
/// Total over the full 4×4 domain:
///
/// | requester | normal | secure | realm | root |
/// |-----------|--------|--------|-------|------|
/// | Normal    | allow  | deny   | deny  | deny |
/// | Secure    | allow  | allow  | deny  | deny |
/// | Realm     | allow  | deny   | allow | deny |
/// | Root      | allow  | allow  | allow | allow|
pub fn gpc_check(requester: SecurityState, target: PasTag) -> AccessDecision {
    use AccessDecision::{Allow, Deny};
    use PasTag::*;
    use SecurityState::*;
    match (requester, target) {
        (_, NormalPas) => Allow,
        (Root, _) => Allow,
        (Secure, SecurePas) => Allow,
        (Realm, RealmPas) => Allow,
        _ => Deny,
    }
}

/// Errors raised by granule-table operations. All are recoverable values —
/// a denied access is an expected outcome the caller asserts on, not a
/// process abort.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorldError {
    /// The granule protection check refused the access.
    AccessFault {
        requester: SecurityState,
        page: u64,
        pas: PasTag,
    },
    /// Page index beyond the end of physical memory.
    UnknownPage { page: u64 },
    /// Retag request that the delegation rules forbid (wrong source tag,
    /// forbidden destination tag, or non-Root caller).
    InvalidTransition {
        page: u64,
        from: PasTag,
        to: PasTag,
    },
}

impl fmt::Display for WorldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorldError::AccessFault {
                requester,
                page,
                pas,
            } => write!(
                f,
                "access fault: {requester} state may not access page {page} ({pas})"
            ),
            WorldError::UnknownPage { page } => write!(f, "unknown page {page}"),
            WorldError::InvalidTransition { page, from, to } => {
                write!(f, "invalid retag of page {page}: {from} -> {to}")
            }
        }
    }
}

impl std::error::Error for WorldError {}

/// One page of delegable physical memory.
#[derive(Clone)]
pub struct Granule {
    index: u64,
    pas: PasTag,
    contents: Box<[u8; PAGE_SIZE]>,
    scrubbed: bool,
}

impl Granule {
    fn new(index: u64) -> Granule {
        Granule {
            index,
            pas: PasTag::NormalPas,
            contents: Box::new([0u8; PAGE_SIZE]),
            scrubbed: true,
        }
    }

    /// Page number of this granule.
    pub fn index(&self) -> u64 {
        self.index
    }

    /// Current physical-address-space tag.
    pub fn pas(&self) -> PasTag {
        self.pas
    }

    /// True while the page is all-zero and untouched since its last scrub.
    pub fn scrubbed(&self) -> bool {
        self.scrubbed
    }
}

impl fmt::Debug for Granule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Granule")
            .field("index", &self.index)
            .field("pas", &self.pas)
            .field("scrubbed", &self.scrubbed)
            .finish()
    }
}

/// Page-granular map of the physical address space: the isolation ground
/// truth.
///
/// The page count is fixed for the table's lifetime; delegation retags pages
/// but never creates or destroys them. The `pas` field of a granule has no
/// public mutator other than [`delegate`](Self::delegate) and
/// [`undelegate`](Self::undelegate), so no retag path bypasses Root-context
/// mediation.
pub struct GranuleProtectionTable {
    pages: Vec<Granule>,
    delegations: u64,
    undelegations: u64,
}

impl GranuleProtectionTable {
    /// A fresh table: every page normal-world memory, zero-filled.
    pub fn new(total_pages: u64) -> GranuleProtectionTable {
        GranuleProtectionTable {
            pages: (0..total_pages).map(Granule::new).collect(),
            delegations: 0,
            undelegations: 0,
        }
    }

    /// Number of pages; constant over the table's lifetime.
    pub fn total_pages(&self) -> u64 {
        self.pages.len() as u64
    }

    /// Number of completed delegate operations.
    pub fn delegation_count(&self) -> u64 {
        self.delegations
    }

    /// Number of completed undelegate operations.
    pub fn undelegation_count(&self) -> u64 {
        self.undelegations
    }

    fn granule(&self, page: u64) -> Result<&Granule, WorldError> {
        self.pages
            .get(page as usize)
            .ok_or(WorldError::UnknownPage { page })
    }

    /// The granule's metadata (tag, scrub state) without an access check.
    /// Inspection helper for tests and post-mortem audits; data access goes
    /// through [`read_page`](Self::read_page).
    pub fn inspect(&self, page: u64) -> Result<&Granule, WorldError> {
        self.granule(page)
    }

    /// Current tag of `page`.
    pub fn pas_of(&self, page: u64) -> Result<PasTag, WorldError> {
        Ok(self.granule(page)?.pas)
    }

    /// Read a full page as `requester`. Succeeds iff the granule protection
    /// check admits the access.
    pub fn read_page(
        &self,
        requester: SecurityState,
        page: u64,
    ) -> Result<&[u8; PAGE_SIZE], WorldError> {
        let granule = self.granule(page)?;
        match gpc_check(requester, granule.pas) {
            AccessDecision::Allow => Ok(&granule.contents),
            AccessDecision::Deny => Err(WorldError::AccessFault {
                requester,
                page,
                pas: granule.pas,
            }),
        }
    }

    /// Write `bytes` at the start of `page` as `requester`, leaving any tail
    /// beyond `bytes.len()` unchanged. Same access gate as
    /// [`read_page`](Self::read_page).
    ///
    /// # Panics
    ///
    /// If `bytes.len() > PAGE_SIZE` (caller contract, like slice indexing).
    pub fn write_page(
        &mut self,
        requester: SecurityState,
        page: u64,
        bytes: &[u8],
    ) -> Result<(), WorldError> {
        assert!(
            bytes.len() <= PAGE_SIZE,
            "write of {} bytes exceeds the {PAGE_SIZE}-byte granule",
            bytes.len()
        );
        let granule = self
            .pages
            .get_mut(page as usize)
            .ok_or(WorldError::UnknownPage { page })?;
        match gpc_check(requester, granule.pas) {
            AccessDecision::Allow => {
                granule.contents[..bytes.len()].copy_from_slice(bytes);
                if !bytes.is_empty() {
                    granule.scrubbed = false;
                }
                Ok(())
            }
            AccessDecision::Deny => Err(WorldError::AccessFault {
                requester,
                page,
                pas: granule.pas,
            }),
        }
    }

    /// Retag a normal-world page into realm or secure space. Root context
    /// only — the monitor mediates all retagging.
    ///
    /// Contents are *not* scrubbed on delegation: the confidentiality threat
    /// is the normal world reading realm residue, not the reverse, and the
    /// receiving world overwrites the page before use.
    pub fn delegate(
        &mut self,
        requester: SecurityState,
        page: u64,
        to: PasTag,
    ) -> Result<(), WorldError> {
        let granule = self
            .pages
            .get_mut(page as usize)
            .ok_or(WorldError::UnknownPage { page })?;
        if requester != SecurityState::Root {
            return Err(WorldError::AccessFault {
                requester,
                page,
                pas: granule.pas,
            });
        }
        if granule.pas != PasTag::NormalPas || !matches!(to, PasTag::RealmPas | PasTag::SecurePas) {
            return Err(WorldError::InvalidTransition {
                page,
                from: granule.pas,
                to,
            });
        }
        granule.pas = to;
        self.delegations += 1;
        Ok(())
    }

    /// Reclaim a delegated page for the normal world: zero the contents,
    /// then retag. Root context only.
    pub fn undelegate(&mut self, requester: SecurityState, page: u64) -> Result<(), WorldError> {
        let granule = self
            .pages
            .get_mut(page as usize)
            .ok_or(WorldError::UnknownPage { page })?;
        if requester != SecurityState::Root {
            return Err(WorldError::AccessFault {
                requester,
                page,
                pas: granule.pas,
            });
        }
        if !matches!(granule.pas, PasTag::RealmPas | PasTag::SecurePas) {
            return Err(WorldError::InvalidTransition {
                page,
                from: granule.pas,
                to: PasTag::NormalPas,
            });
        }
        granule.contents.fill(0);
        granule.scrubbed = true;
        granule.pas = PasTag::NormalPas;
        self.undelegations += 1;
        Ok(())
    }

    /// Page count per tag, indexed in [`PasTag::ALL`] order. Sums to
    /// [`total_pages`](Self::total_pages) whatever delegation history
    /// preceded the call.
    pub fn counts_by_tag(&self) -> [u64; 4] {
        let mut counts = [0u64; 4];
        for granule in &self.pages {
            let slot = PasTag::ALL
                .iter()
                .position(|t| *t == granule.pas)
                .expect("tag in ALL");
            counts[slot] += 1;
        }
        counts
    }

    /// All pages whose contents `state` may read, with their page numbers.
    /// This is the raw material of confidentiality scans: for
    /// `SecurityState::Normal` it yields exactly the normal-PAS pages.
    pub fn pages_readable_by(
        &self,
        state: SecurityState,
    ) -> impl Iterator<Item = (u64, &[u8; PAGE_SIZE])> {
        self.pages
            .iter()
            .filter(move |g| gpc_check(state, g.pas) == AccessDecision::Allow)
            .map(|g| (g.index, &*g.contents))
    }

    /// First page currently tagged normal-PAS at or after `from`, if any.
    /// Allocation helper for lifecycle drivers hunting delegable pages.
    pub fn next_normal_page(&self, from: u64) -> Option<u64> {
        self.pages[from.min(self.total_pages()) as usize..]
            .iter()
            .find(|g| g.pas == PasTag::NormalPas)
            .map(|g| g.index)
    }
}

impl fmt::Debug for GranuleProtectionTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [normal, secure, realm, root] = self.counts_by_tag();
        f.debug_struct("GranuleProtectionTable")
            .field("total_pages", &self.total_pages())
            .field("normal", &normal)
            .field("secure", &secure)
            .field("realm", &realm)
            .field("root", &root)
            .finish()
    }
}
