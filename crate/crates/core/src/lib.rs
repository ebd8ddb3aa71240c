//! Decentralized reinforcement-learning control of PV inverters on radial
//! distribution feeders.

pub mod env;
pub mod feeders;
pub mod grid;
pub mod nn;
pub mod powerflow;
pub mod ppo;

/// The guide's chapters, compiled so their snippets run as doc-tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/feeders.md")]
    struct Feeders;
    #[doc = include_str!("../../../book/src/powerflow.md")]
    struct PowerFlow;
    #[doc = include_str!("../../../book/src/environment.md")]
    struct Environment;
    #[doc = include_str!("../../../book/src/networks.md")]
    struct Networks;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
