//! Graph fusion encoder embedding (GFEE) for collections of graphs that
//! share a vertex set, with the simulation, baseline and evaluation tooling
//! around it.

pub mod baselines;
pub mod classifier;
pub mod encoder;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod ingest;
pub mod sbm;
pub mod spectral;

pub use classifier::{cross_validate, EvalProtocol, ErrorReport};
pub use encoder::{build_encoder, fuse, EncoderMatrix, FusionEmbedding};
pub use error::{Error, Result};
pub use graph::{Edge, EdgeList, Graph, GraphCollection, LabelVector};
pub use sbm::BlockSpec;
