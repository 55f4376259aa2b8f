//! Upper bounds on the information gain of d-level random access codes that
//! share a no-signaling box.
//!
//! The crate builds and solves NPA-style moment-matrix relaxations
//! ([`npa`], [`sdp`]), evaluates information quantities of the induced guess
//! channels ([`protocol`], [`infotheory`]), and scans the binary two-setting
//! case by brute force ([`explorer`]).

pub mod error;
pub mod explorer;
pub mod infotheory;
pub mod linalg;
pub mod npa;
pub mod nsbox;
pub mod protocol;
pub mod sdp;

pub use error::{Error, Result};
pub use infotheory::{ChannelMatrix, GainReport};
pub use npa::{BoundResult, Level, MomentProblem, OperatorLabel};
pub use nsbox::{CorrelationQuad, NsBox};
pub use protocol::{Dit, GuessChannel, RacScheme};
pub use sdp::{SdpProblem, SdpSolution, SolveStatus};
