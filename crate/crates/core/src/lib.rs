//! Workbench for subgraph isomorphism counting on directed labeled
//! multigraphs: exact engines (brute force and VF2), generators that build
//! datasets with counts known by construction, sequence/graph encodings, and
//! neural counting models trained against the exact counts.

pub mod bench;
pub mod codec;
pub mod count;
pub mod dataset;
pub mod generator;
pub mod graph;
pub mod models;
pub mod mutag;
pub mod numkit;
pub mod pipeline;
pub mod rng;
pub mod trainer;
