use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{canonical_chain, Block, LedgerExport, LedgerTree, TrustTransaction, GENESIS};
use crate::trust_graph::{Context, EntityId, Identity, KeyRegistry, LogicalTime, RelationKey, TrustValue};

/// A random valid block set of `n_blocks` blocks with forks, supersessions
/// and removals, signed under `KeyRegistry::from_seed(seed)`.
pub fn synthetic_ledger(seed: u64, n_blocks: usize) -> LedgerExport {
    let registry = KeyRegistry::from_seed(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c65_6467_6572);
    let names: Vec<EntityId> = (0..5).map(|i| EntityId::new(format!("E{i}")).unwrap()).collect();
    let mut tree = LedgerTree::new();
    let mut all: Vec<Arc<Block>> = Vec::new();
    while all.len() < n_blocks {
        let parent = if all.is_empty() || rng.gen_bool(0.75) {
            canonical_chain(&tree).last().map_or(GENESIS, |b| b.id)
        } else {
            all[rng.gen_range(0..all.len())].id
        };
        let mut graph = (**tree.state_of(&parent).expect("known parent")).clone();
        let mut txs = Vec::new();
        for _ in 0..rng.gen_range(0..=3) {
            let a = rng.gen_range(0..names.len());
            let b = (a + rng.gen_range(1..names.len())) % names.len();
            let context = if rng.gen_bool(0.5) {
                Context::authenticator_trust()
            } else {
                Context::validity(Identity::named(names[rng.gen_range(0..names.len())].as_str())).unwrap()
            };
            let key = RelationKey::new(names[a].clone(), names[b].clone(), context);
            let counter = graph.latest_time(&key).map_or(0, |t| t.counter) + rng.gen_range(1..=3);
            let time = LogicalTime::new(counter, names[a].clone());
            let signer = registry.signing_key(&names[a]);
            let tx = if graph.get(&key).is_some() && rng.gen_bool(0.3) {
                TrustTransaction::Remove { attestation: signer.removal(&key, &time), key, time }
            } else {
                let v = [0.0, 0.5, 0.6, 0.9, 1.0][rng.gen_range(0..5)];
                TrustTransaction::Upsert(signer.relation(key.trustee, key.context, TrustValue::new(v).unwrap(), time))
            };
            super::apply_transaction(&mut graph, &tx, &registry).expect("generated transaction applies");
            txs.push(tx);
        }
        let height = tree.height_of(&parent).unwrap() + 1;
        let proposer = names[rng.gen_range(0..names.len())].clone();
        let block = Arc::new(Block::new(parent, height, proposer, txs));
        if tree.contains(&block.id) {
            continue;
        }
        tree.append_block(block.clone(), &registry).expect("generated block is valid");
        all.push(block);
    }
    LedgerExport { key_seed: seed, blocks: all.iter().map(|b| (**b).clone()).collect() }
}
