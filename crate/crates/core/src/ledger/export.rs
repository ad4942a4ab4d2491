//! Line-oriented block export.
//!
//! ```text
//! # comment
//! keyseed <u64>
//! block <id> <parent hex | GENESIS> <height> <proposer> <tx count>
//! tx <canonical transaction line>
//! ```
//!
//! `keyseed` names the simulated key registry the attestations verify
//! against and is required once any block is present. Blocks are written in
//! (height, id) order. Parsing is strict: every line must be exactly what
//! [`export_blocks`] would have written for the parsed values.

use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{stable_view, Block, LedgerError, LedgerTree, TrustTransaction, GENESIS};
use crate::trust_graph::{parse_counter, EntityId, KeyRegistry};
use crate::Digest;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerExport {
    pub key_seed: u64,
    pub blocks: Vec<Block>,
}

fn parent_token(d: &Digest) -> String {
    if *d == GENESIS {
        "GENESIS".to_string()
    } else {
        d.to_hex()
    }
}

pub fn export_blocks<'a, I: IntoIterator<Item = &'a Block>>(key_seed: u64, blocks: I) -> String {
    let mut blocks: Vec<&Block> = blocks.into_iter().collect();
    blocks.sort_by_key(|b| (b.height, b.id));
    let mut out = String::from("# tmsim ledger export\n");
    out.push_str(&format!("keyseed {key_seed}\n"));
    for b in blocks {
        out.push_str(&format!(
            "block {} {} {} {} {}\n",
            b.id,
            parent_token(&b.parent),
            b.height,
            b.proposer.canonical(),
            b.txs.len()
        ));
        for tx in &b.txs {
            out.push_str("tx ");
            out.push_str(&tx.canonical_line());
            out.push('\n');
        }
    }
    out
}

pub fn import_blocks(text: &str) -> Result<LedgerExport, LedgerError> {
    let err = |line: usize, message: String| LedgerError::Parse { line, message };
    let mut key_seed = None;
    let mut blocks = Vec::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();
    while let Some((no, line)) = lines.next() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("keyseed ") {
            if key_seed.is_some() || !blocks.is_empty() {
                return Err(err(no, "keyseed must appear once, before any block".into()));
            }
            key_seed = Some(parse_counter(rest).ok_or_else(|| err(no, format!("bad keyseed {rest:?}")))?);
            continue;
        }
        let Some(rest) = line.strip_prefix("block ") else {
            return Err(err(no, format!("unexpected line {line:?}")));
        };
        if key_seed.is_none() {
            return Err(err(no, "block before keyseed".into()));
        }
        let f: Vec<&str> = rest.split(' ').collect();
        if f.len() != 5 {
            return Err(err(no, format!("block line needs 5 fields, found {}", f.len())));
        }
        let id = Digest::from_str(f[0]).map_err(|e| err(no, e.to_string()))?;
        let parent = match f[1] {
            "GENESIS" => GENESIS,
            hex => Digest::from_str(hex).map_err(|e| err(no, e.to_string()))?,
        };
        let height = parse_counter(f[2]).ok_or_else(|| err(no, format!("bad height {:?}", f[2])))?;
        let proposer = EntityId::parse_canonical(f[3]).ok_or_else(|| err(no, format!("bad proposer {:?}", f[3])))?;
        let ntx = parse_counter(f[4]).ok_or_else(|| err(no, format!("bad tx count {:?}", f[4])))? as usize;
        if parent_token(&parent) != f[1] || proposer.canonical() != f[3] {
            return Err(err(no, "non-canonical block line".into()));
        }
        let mut txs = Vec::with_capacity(ntx.min(1024));
        for _ in 0..ntx {
            let (tno, tline) = lines.next().ok_or_else(|| err(no, "missing transaction lines".into()))?;
            let body =
                tline.strip_prefix("tx ").ok_or_else(|| err(tno, format!("expected tx line, found {tline:?}")))?;
            txs.push(TrustTransaction::parse_canonical_line(body).map_err(|e| err(tno, e.to_string()))?);
        }
        blocks.push(Block { id, parent, height, proposer, txs });
    }
    Ok(LedgerExport { key_seed: key_seed.unwrap_or(0), blocks })
}

/// Failure of a replay, located at the offending block.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("block #{index} ({id}): {cause}")]
pub struct ReplayFailure {
    pub index: usize,
    pub id: Digest,
    pub cause: LedgerError,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayVerdict {
    pub blocks: usize,
    pub confirmation_depth: usize,
    pub forward: Digest,
    pub reordered: Digest,
}

impl ReplayVerdict {
    pub fn pass(&self) -> bool {
        self.forward == self.reordered
    }
}

fn fold<'a, I: IntoIterator<Item = (usize, &'a Block)>>(
    blocks: I,
    registry: &KeyRegistry,
    k: usize,
) -> Result<Digest, ReplayFailure> {
    let mut tree = LedgerTree::new();
    for (index, b) in blocks {
        tree.append_block(Arc::new(b.clone()), registry).map_err(|cause| ReplayFailure { index, id: b.id, cause })?;
    }
    Ok(stable_view(&tree, k).graph.snapshot_digest())
}

/// Replays the export twice, once in file order and once after a seeded
/// shuffle followed by a sort on (height, id), and reports both stable-view
/// digests.
pub fn replay_check(export: &LedgerExport, k: usize, shuffle_seed: u64) -> Result<ReplayVerdict, ReplayFailure> {
    let registry = KeyRegistry::from_seed(export.key_seed);
    let forward = fold(export.blocks.iter().enumerate(), &registry, k)?;
    let mut order: Vec<(usize, &Block)> = export.blocks.iter().enumerate().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    order.sort_by_key(|(_, b)| (b.height, b.id));
    let reordered = fold(order, &registry, k)?;
    Ok(ReplayVerdict { blocks: export.blocks.len(), confirmation_depth: k, forward, reordered })
}
