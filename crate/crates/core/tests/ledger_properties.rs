use std::sync::Arc;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tmsim_core::ledger::{
    canonical_chain, export_blocks, import_blocks, replay_check, stable_view, synthetic_ledger, Block, LedgerTree,
    TrustTransaction, GENESIS,
};
use tmsim_core::trust_graph::{Context, EntityId, Identity, KeyRegistry, LogicalTime, TrustValue};

fn e(s: &str) -> EntityId {
    EntityId::new(s).unwrap()
}

fn build(blocks: &[Block], reg: &KeyRegistry) -> LedgerTree {
    let mut tree = LedgerTree::new();
    for b in blocks {
        tree.append_block(Arc::new(b.clone()), reg).unwrap();
    }
    tree
}

// Inserts in an arbitrary order, parking blocks until their parent arrives.
fn build_any_order(mut blocks: Vec<Block>, reg: &KeyRegistry) -> LedgerTree {
    let mut tree = LedgerTree::new();
    while !blocks.is_empty() {
        let before = blocks.len();
        blocks.retain(|b| {
            if tree.contains(&b.parent) {
                tree.append_block(Arc::new(b.clone()), reg).unwrap();
                false
            } else {
                true
            }
        });
        assert!(blocks.len() < before, "orphans left");
    }
    tree
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stable_view_ignores_insertion_order(seed in any::<u64>(), n in 0usize..25, k in 0usize..8) {
        let ex = synthetic_ledger(seed, n);
        let reg = KeyRegistry::from_seed(ex.key_seed);
        let a = build(&ex.blocks, &reg);
        let mut shuffled = ex.blocks.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = build_any_order(shuffled, &reg);
        prop_assert_eq!(a.canonical_tip(), b.canonical_tip());
        prop_assert_eq!(stable_view(&a, k).graph.snapshot_digest(), stable_view(&b, k).graph.snapshot_digest());
    }

    // Extending the chain never changes the snapshot at a height that was
    // already stable, as long as the old canonical chain stays a prefix.
    #[test]
    fn stable_prefix_survives_extension(seed in any::<u64>(), n in 1usize..20, extra in 1usize..10) {
        let ex = synthetic_ledger(seed, n + extra);
        let reg = KeyRegistry::from_seed(ex.key_seed);
        let small = build(&ex.blocks[..n], &reg);
        let big = build(&ex.blocks, &reg);
        let old: Vec<_> = canonical_chain(&small).iter().map(|b| b.id).collect();
        let new: Vec<_> = canonical_chain(&big).iter().map(|b| b.id).collect();
        if new.starts_with(&old) {
            let sv = stable_view(&small, 6);
            let at = big.ancestor_at(&big.canonical_tip(), sv.height).unwrap();
            prop_assert_eq!(at, sv.head);
            prop_assert_eq!(big.state_of(&at).unwrap().snapshot_digest(), sv.graph.snapshot_digest());
        }
    }

    #[test]
    fn replay_check_passes_and_catches_flips(seed in any::<u64>(), n in 1usize..15, pick in any::<prop::sample::Index>()) {
        let ex = synthetic_ledger(seed, n);
        let text = export_blocks(ex.key_seed, &ex.blocks);
        prop_assert!(replay_check(&import_blocks(&text).unwrap(), 6, 1).unwrap().pass());
        let tx_bytes: Vec<usize> = text
            .match_indices("\ntx ")
            .flat_map(|(at, _)| {
                let start = at + 4;
                let end = text[start..].find('\n').map_or(text.len(), |l| start + l);
                start..end
            })
            .collect();
        if !tx_bytes.is_empty() {
            let mut bytes = text.clone().into_bytes();
            bytes[tx_bytes[pick.index(tx_bytes.len())]] ^= 1;
            let caught = match String::from_utf8(bytes) {
                Err(_) => true,
                Ok(flipped) => match import_blocks(&flipped) {
                    Err(_) => true,
                    Ok(parsed) => match replay_check(&parsed, 6, 1) {
                        Err(_) => true,
                        Ok(v) => !v.pass(),
                    },
                },
            };
            prop_assert!(caught);
        }
    }
}

fn validity(reg: &KeyRegistry, a: &str, b: &str, id: &str, v: f64, t: u64) -> TrustTransaction {
    TrustTransaction::Upsert(reg.signing_key(&e(a)).relation(
        e(b),
        Context::validity(Identity::named(id)).unwrap(),
        TrustValue::new(v).unwrap(),
        LogicalTime::new(t, e(a)),
    ))
}

fn chain_of(txs: Vec<Vec<TrustTransaction>>, reg: &KeyRegistry) -> LedgerTree {
    let mut tree = LedgerTree::new();
    let mut parent = GENESIS;
    for (i, t) in txs.into_iter().enumerate() {
        let b = Block::new(parent, i as u64 + 1, e("P"), t);
        parent = b.id;
        tree.append_block(Arc::new(b), reg).unwrap();
    }
    tree
}

#[test]
fn conflicting_bindings_in_the_stable_prefix_are_visible() {
    let reg = KeyRegistry::from_seed(2);
    let mut blocks =
        vec![vec![validity(&reg, "I", "C", "id_C", 1.0, 1)], vec![validity(&reg, "B", "C'", "id_C", 1.0, 1)]];
    blocks.extend((0..6).map(|_| Vec::new()));
    let tree = chain_of(blocks, &reg);
    let conflicts = stable_view(&tree, 6).graph.find_conflicts();
    assert_eq!(conflicts, vec![(Identity::named("id_C"), [e("C"), e("C'")].into())]);
    // one block short of k-deep: not yet stable
    let shallow = LedgerTree::new();
    assert!(stable_view(&shallow, 6).graph.find_conflicts().is_empty());
}

#[test]
fn newer_relation_wins_once_both_are_stable() {
    let reg = KeyRegistry::from_seed(2);
    let tr1 = validity(&reg, "B", "C", "id_C", 1.0, 1);
    let tr2 = validity(&reg, "B", "C", "id_C", 0.0, 2);
    let mut blocks = vec![vec![tr1], vec![tr2.clone()]];
    blocks.extend((0..6).map(|_| Vec::new()));
    let tree = chain_of(blocks, &reg);
    let sv = stable_view(&tree, 6);
    let TrustTransaction::Upsert(r2) = tr2 else { unreachable!() };
    assert_eq!(sv.graph.get(&r2.key()), Some(&r2));
}
