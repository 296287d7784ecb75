//! Cluster-ensemble consensus.
//!
//! Combines many labelings of the same samples into one by maximizing the summed
//! NMI to all of them (ANMI), choosing among the CSPA and MCLA consensus
//! functions and any caller-supplied candidates.

mod consensus;
mod info;
mod labeling;
mod linkage;

pub use consensus::{
    co_association, cspa, mcla, supra_consensus, CandidateScore, CoAssociationMatrix,
    SupraConsensus,
};
pub use info::{anmi, contingency, entropy_count, mutual_information, nmi, ContingencyTable};
pub use labeling::Labeling;
