use rand::RngCore;

use crate::model::Context;

/// A data-collection policy that is fixed before the online phase starts.
///
/// `choose` may randomize through `rng` but never sees rewards.
pub trait ExplorationPolicy: Send + Sync {
    fn name(&self) -> &str;

    /// Feature dimension the policy was built for, if it has one.
    fn dim(&self) -> Option<usize> {
        None
    }

    fn choose(&self, context: &Context, rng: &mut dyn RngCore) -> usize;
}
