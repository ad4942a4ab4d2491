use serde::{Deserialize, Serialize};

use crate::ledger::TrustTransaction;
use crate::trust_graph::{ContextClass, EntityId, TrustRelation};

/// Selects relations (or the transactions carrying them).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationFilter {
    #[serde(default)]
    pub author: Option<EntityId>,
    #[serde(default)]
    pub trustee: Option<EntityId>,
    #[serde(default)]
    pub class: Option<ContextClass>,
    /// Only revocations: value 0 or removals.
    #[serde(default)]
    pub revocations_only: bool,
}

impl RelationFilter {
    fn fields_match(&self, author: &EntityId, trustee: &EntityId, class: ContextClass) -> bool {
        self.author.as_ref().is_none_or(|a| a == author)
            && self.trustee.as_ref().is_none_or(|t| t == trustee)
            && self.class.is_none_or(|c| c == class)
    }

    pub fn matches(&self, rel: &TrustRelation) -> bool {
        self.fields_match(&rel.trustor, &rel.trustee, rel.context.class())
            && (!self.revocations_only || rel.value.is_revoked())
    }

    pub fn matches_tx(&self, tx: &TrustTransaction) -> bool {
        match tx {
            TrustTransaction::Upsert(rel) => self.matches(rel),
            TrustTransaction::Remove { key, .. } => self.fields_match(&key.trustor, &key.trustee, key.context.class()),
        }
    }
}

/// Unsigned relation content; signed at run time by its trustor's key, which
/// must be adversarial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationTemplate {
    pub trustor: EntityId,
    pub trustee: EntityId,
    pub context: crate::trust_graph::Context,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum ChannelAction {
    Drop,
    Delay {
        rounds: u64,
    },
    /// Drops matching messages; query responses fall back to the newest
    /// non-matching version the server has seen.
    Withhold {
        filter: RelationFilter,
    },
    /// Query responses to `target` about a substitute's trustee return the
    /// substitute in place of the true relation at that key.
    EquivocateTo {
        target: EntityId,
        substitutes: Vec<RelationTemplate>,
    },
}

/// Applies to messages from `from` to `to` (any sender / receiver when
/// unset) during rounds `[start, end)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelDirective {
    pub from: Option<EntityId>,
    pub to: Option<EntityId>,
    pub start: u64,
    pub end: Option<u64>,
    pub action: ChannelAction,
}

impl ChannelDirective {
    pub fn applies(&self, from: &EntityId, to: &EntityId, round: u64) -> bool {
        self.from.as_ref().is_none_or(|f| f == from)
            && self.to.as_ref().is_none_or(|t| t == to)
            && round >= self.start
            && self.end.is_none_or(|e| round < e)
    }
}

/// Fate of one message.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    Deliver { at: u64 },
    Drop,
}

/// Per-link directives; links without one deliver within the round.
#[derive(Clone, Debug, Default)]
pub struct ChannelPolicy {
    directives: Vec<ChannelDirective>,
}

impl ChannelPolicy {
    pub fn new(directives: Vec<ChannelDirective>) -> Self {
        ChannelPolicy { directives }
    }

    pub fn active<'a>(
        &'a self,
        from: &'a EntityId,
        to: &'a EntityId,
        round: u64,
    ) -> impl Iterator<Item = &'a ChannelAction> + 'a {
        self.directives.iter().filter(move |d| d.applies(from, to, round)).map(|d| &d.action)
    }

    /// Routes a message sent at `round`. `withheld` says whether a filter
    /// selects the payload.
    pub fn route(
        &self,
        from: &EntityId,
        to: &EntityId,
        round: u64,
        withheld: impl Fn(&RelationFilter) -> bool,
    ) -> Route {
        let mut delay = 0;
        for action in self.active(from, to, round) {
            match action {
                ChannelAction::Drop => return Route::Drop,
                ChannelAction::Withhold { filter } if withheld(filter) => return Route::Drop,
                ChannelAction::Delay { rounds } => delay = delay.max(*rounds),
                _ => {}
            }
        }
        Route::Deliver { at: round + delay }
    }

    /// Whether a query from `from` to `server` gets an answer this round.
    pub fn reachable(&self, from: &EntityId, server: &EntityId, round: u64) -> bool {
        let blocked = |a: &EntityId, b: &EntityId| {
            self.active(a, b, round).any(|x| matches!(x, ChannelAction::Drop | ChannelAction::Delay { .. }))
        };
        !blocked(from, server) && !blocked(server, from)
    }

    /// Whether `a` and `b` can exchange messages at all this round.
    pub fn linked(&self, a: &EntityId, b: &EntityId, round: u64) -> bool {
        let cut = |x: &EntityId, y: &EntityId| self.active(x, y, round).any(|d| matches!(d, ChannelAction::Drop));
        !cut(a, b) && !cut(b, a)
    }
}
