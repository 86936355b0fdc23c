pub mod dynamics;
pub mod error;
pub mod io;
pub mod model;
pub mod phase_map;
pub mod steady;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/steady_states.md")]
    mod steady_states {}
    #[doc = include_str!("../../../book/src/stability.md")]
    mod stability {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/phase_diagram.md")]
    mod phase_diagram {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
