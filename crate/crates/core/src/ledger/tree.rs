use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{validate_block, Block, LedgerError, GENESIS};
use crate::trust_graph::{TrustGraph, Verifier};
use crate::Digest;

/// Confirmation depth used when none is configured.
pub const DEFAULT_CONFIRMATION_DEPTH: usize = 6;

/// A block tree with the replayed snapshot of every block.
///
/// Genesis is implicit: it has id [`GENESIS`], height 0, no transactions, and
/// the empty graph as snapshot.
#[derive(Clone, Debug, Default)]
pub struct LedgerTree {
    blocks: BTreeMap<Digest, Arc<Block>>,
    states: BTreeMap<Digest, Arc<TrustGraph>>,
    tips: BTreeSet<Digest>,
    empty: Arc<TrustGraph>,
}

impl LedgerTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn genesis(&self) -> Digest {
        GENESIS
    }

    pub fn contains(&self, id: &Digest) -> bool {
        *id == GENESIS || self.blocks.contains_key(id)
    }

    pub fn block(&self, id: &Digest) -> Option<&Arc<Block>> {
        self.blocks.get(id)
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Arc<Block>> {
        self.blocks.values()
    }

    /// Blocks without children. Genesis is the only tip of an empty tree.
    pub fn tips(&self) -> BTreeSet<Digest> {
        if self.blocks.is_empty() {
            return [GENESIS].into();
        }
        self.tips.clone()
    }

    pub fn height_of(&self, id: &Digest) -> Option<u64> {
        if *id == GENESIS {
            return Some(0);
        }
        self.blocks.get(id).map(|b| b.height)
    }

    /// Replayed snapshot after `id`.
    pub fn state_of(&self, id: &Digest) -> Option<&Arc<TrustGraph>> {
        if *id == GENESIS {
            return Some(&self.empty);
        }
        self.states.get(id)
    }

    /// Validates `block` against its parent's snapshot and inserts it.
    pub fn append_block(&mut self, block: Arc<Block>, verifier: &dyn Verifier) -> Result<(), LedgerError> {
        self.check_insertable(&block)?;
        let parent_graph = self.state_of(&block.parent).expect("checked parent");
        let parent_height = self.height_of(&block.parent).expect("checked parent");
        let state = validate_block(parent_graph, parent_height, &block, verifier)?;
        self.insert(block, Arc::new(state));
        Ok(())
    }

    /// Inserts a block whose snapshot was already computed by
    /// [`validate_block`] on the same parent, e.g. by another replica. Linkage
    /// is still checked.
    pub fn append_validated(&mut self, block: Arc<Block>, state: Arc<TrustGraph>) -> Result<(), LedgerError> {
        self.check_insertable(&block)?;
        let parent_height = self.height_of(&block.parent).expect("checked parent");
        if block.height != parent_height + 1 || !block.id_matches() {
            return Err(LedgerError::BadLinkage(format!("block {} does not link to its parent", block.id)));
        }
        self.insert(block, state);
        Ok(())
    }

    fn check_insertable(&self, block: &Block) -> Result<(), LedgerError> {
        if self.contains(&block.id) {
            return Err(LedgerError::DuplicateBlock(block.id));
        }
        if !self.contains(&block.parent) {
            return Err(LedgerError::UnknownParent(block.parent));
        }
        Ok(())
    }

    fn insert(&mut self, block: Arc<Block>, state: Arc<TrustGraph>) {
        self.tips.remove(&block.parent);
        self.tips.insert(block.id);
        self.states.insert(block.id, state);
        self.blocks.insert(block.id, block);
    }

    /// Tip of the canonical chain: greatest height, then smallest digest.
    pub fn canonical_tip(&self) -> Digest {
        self.tips
            .iter()
            .map(|id| (self.blocks[id].height, *id))
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
            .map_or(GENESIS, |(_, id)| id)
    }

    /// Blocks from height 1 up to `tip`.
    pub fn path_to(&self, tip: &Digest) -> Vec<Arc<Block>> {
        let mut out = Vec::new();
        let mut cur = *tip;
        while cur != GENESIS {
            let b = &self.blocks[&cur];
            out.push(b.clone());
            cur = b.parent;
        }
        out.reverse();
        out
    }

    /// Ancestor of `id` at `height` (genesis at 0).
    pub fn ancestor_at(&self, id: &Digest, height: u64) -> Option<Digest> {
        let mut cur = *id;
        loop {
            let h = self.height_of(&cur)?;
            if h == height {
                return Some(cur);
            }
            if h < height {
                return None;
            }
            cur = self.blocks[&cur].parent;
        }
    }
}

/// Root-to-tip path of maximal height, ties broken by the smaller tip
/// digest. Genesis is not included.
pub fn canonical_chain(tree: &LedgerTree) -> Vec<Arc<Block>> {
    tree.path_to(&tree.canonical_tip())
}

/// Snapshot accepted as irreversible.
#[derive(Clone, Debug)]
pub struct StableView {
    pub head: Digest,
    pub height: u64,
    pub confirmation_depth: usize,
    pub graph: Arc<TrustGraph>,
}

/// Replay of the canonical chain without its last `k` blocks; the empty graph
/// when the chain has at most `k` blocks.
pub fn stable_view(tree: &LedgerTree, k: usize) -> StableView {
    let tip = tree.canonical_tip();
    let tip_height = tree.height_of(&tip).expect("tip exists");
    let height = tip_height.saturating_sub(k as u64);
    let head = tree.ancestor_at(&tip, height).expect("ancestor exists");
    StableView { head, height, confirmation_depth: k, graph: tree.state_of(&head).expect("known block").clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{apply_transaction, TrustTransaction};
    use crate::trust_graph::{Context, EntityId, Identity, KeyRegistry, LogicalTime, TrustValue};

    fn e(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn tx(reg: &KeyRegistry, t: u64) -> TrustTransaction {
        TrustTransaction::Upsert(reg.signing_key(&e("A")).relation(
            e(&format!("B{t}")),
            Context::validity(Identity::named("x")).unwrap(),
            TrustValue::FULL,
            LogicalTime::new(t, e("A")),
        ))
    }

    fn extend(tree: &mut LedgerTree, reg: &KeyRegistry, from: Digest, n: u64, proposer: &str, t0: u64) -> Vec<Digest> {
        let mut parent = from;
        let mut ids = Vec::new();
        for i in 0..n {
            let h = tree.height_of(&parent).unwrap() + 1;
            let b = Block::new(parent, h, e(proposer), vec![tx(reg, t0 + i)]);
            parent = b.id;
            ids.push(b.id);
            tree.append_block(Arc::new(b), reg).unwrap();
        }
        ids
    }

    #[test]
    fn linear_chain_is_canonical() {
        let reg = KeyRegistry::from_seed(1);
        let mut tree = LedgerTree::new();
        let ids = extend(&mut tree, &reg, GENESIS, 5, "P", 1);
        let chain: Vec<Digest> = canonical_chain(&tree).iter().map(|b| b.id).collect();
        assert_eq!(chain, ids);
    }

    #[test]
    fn longest_branch_wins_and_forks_have_two_tips() {
        let reg = KeyRegistry::from_seed(1);
        let mut tree = LedgerTree::new();
        let trunk = extend(&mut tree, &reg, GENESIS, 2, "P", 1);
        let short = extend(&mut tree, &reg, trunk[1], 2, "Q", 10);
        assert_eq!(tree.tips().len(), 1);
        let long = extend(&mut tree, &reg, trunk[1], 4, "R", 20);
        assert_eq!(tree.tips(), [short[1], long[3]].into());
        assert_eq!(canonical_chain(&tree).last().unwrap().id, long[3]);
        assert_eq!(canonical_chain(&tree).len(), 6);
    }

    #[test]
    fn equal_height_tie_goes_to_smaller_digest() {
        let reg = KeyRegistry::from_seed(1);
        let mut tree = LedgerTree::new();
        let a = extend(&mut tree, &reg, GENESIS, 3, "P", 1);
        let b = extend(&mut tree, &reg, GENESIS, 3, "Q", 1);
        let expect = a[2].min(b[2]);
        assert_eq!(tree.canonical_tip(), expect);
    }

    #[test]
    fn append_errors() {
        let reg = KeyRegistry::from_seed(1);
        let mut tree = LedgerTree::new();
        let b = Arc::new(Block::new(GENESIS, 1, e("P"), vec![tx(&reg, 1)]));
        tree.append_block(b.clone(), &reg).unwrap();
        assert_eq!(tree.append_block(b.clone(), &reg), Err(LedgerError::DuplicateBlock(b.id)));
        let orphan = Arc::new(Block::new(Digest::of(b"nowhere"), 5, e("P"), vec![]));
        assert_eq!(tree.append_block(orphan, &reg), Err(LedgerError::UnknownParent(Digest::of(b"nowhere"))));
        let bad = Arc::new(Block::new(b.id, 2, e("P"), vec![tx(&reg, 1)]));
        assert!(matches!(tree.append_block(bad, &reg), Err(LedgerError::InvalidTx { index: 0, .. })));
        assert_eq!(tree.len(), 1);
    }

    #[test]
    fn stable_view_truncates_k_blocks() {
        let reg = KeyRegistry::from_seed(1);
        let mut tree = LedgerTree::new();
        let ids = extend(&mut tree, &reg, GENESIS, 10, "P", 1);
        let sv = stable_view(&tree, 6);
        assert_eq!(sv.head, ids[3]);
        assert_eq!(sv.height, 4);
        // independent replay of blocks 1..=4
        let mut g = TrustGraph::new();
        for b in canonical_chain(&tree).iter().take(4) {
            for t in &b.txs {
                apply_transaction(&mut g, t, &reg).unwrap();
            }
        }
        assert_eq!(sv.graph.snapshot_digest(), g.snapshot_digest());
        assert_eq!(sv.graph.len(), 4);

        let mut short = LedgerTree::new();
        extend(&mut short, &reg, GENESIS, 3, "P", 1);
        let sv = stable_view(&short, 6);
        assert_eq!(sv.head, GENESIS);
        assert!(sv.graph.is_empty());
    }

    #[test]
    fn replicas_with_equal_blocks_agree() {
        let reg = KeyRegistry::from_seed(1);
        let mut a = LedgerTree::new();
        extend(&mut a, &reg, GENESIS, 9, "P", 1);
        let mut blocks: Vec<Arc<Block>> = a.blocks().cloned().collect();
        blocks.sort_by_key(|b| std::cmp::Reverse(b.id));
        blocks.sort_by_key(|b| b.height);
        let mut b = LedgerTree::new();
        for blk in blocks {
            b.append_block(blk, &reg).unwrap();
        }
        assert_eq!(stable_view(&a, 6).graph.snapshot_digest(), stable_view(&b, 6).graph.snapshot_digest());
    }
}
