//! Detection and autonomous TSN integration of periodic, TSN-unaware streams.
//!
//! The crate is organized along the processing chain of the proxy:
//!
//! * [`streamgen`] builds the labeled periodic/aperiodic training corpus.
//! * [`features`] turns arrival times into the running coefficient of
//!   variation consumed by the classifier.
//! * [`rnn`] is the stacked LSTM periodicity classifier and its trainer.
//! * [`metrics`] scores the classifier (accuracy, precision, recall, F1).
//! * [`descriptor`] extracts the `(interval, max frames, max frame size)`
//!   traffic descriptor from observed arrivals.
//! * [`qosmap`] resolves an application identity to QoS requirements.
//! * [`proxy`] ties the stages together, talks to the CNC and configures
//!   stream identification on the first switch.
//! * [`netsim`] is a deterministic discrete-event dumbbell network used to
//!   demonstrate the closed loop.

pub mod capture;
pub mod descriptor;
pub mod error;
pub mod features;
pub mod metrics;
pub mod netsim;
pub mod proxy;
pub mod qosmap;
pub mod rnn;
pub mod seed;
pub mod streamgen;

pub use descriptor::{extract_descriptor, DeviationProfile, DeviationRange, TrafficDescriptor};
pub use error::{Error, ErrorClass, Result};
pub use features::{cov_sequence, CovAccumulator, CovSequence};
pub use metrics::ConfusionCounts;
pub use proxy::{PacketRecord, Protocol, Proxy, ProxyConfig, StreamKey, StreamRecord, StreamState};
pub use qosmap::{ApplicationId, QosDatabase, QosRequirements, StreamRank};
pub use rnn::{PeriodicityClassifier, RnnConfig, TrainedModel};
pub use streamgen::{DatasetSpec, GenParams, LabeledStream, PatternMask, StreamClass};
