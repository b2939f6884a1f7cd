//! Dual-encoder drug repurposing.
//!
//! Drugs are encoded by a message-passing network over their molecular
//! graph ([`molgraph`], [`encoders::mpnn`]); disease codes by attention over
//! their ICD-10 ancestors ([`ontology`], [`encoders::gram`]). The two
//! embeddings are compared by cosine similarity and trained with a
//! contrastive cross-entropy objective ([`drugclip`]). [`evalrank`] ranks
//! a whole drug database per disease query under a temporal split.

pub mod dataio;
pub mod diffcore;
pub mod drugclip;
pub mod encoders;
pub mod evalrank;
pub mod molgraph;
pub mod ontology;
pub mod synthetic;
