pub mod arch;
pub mod bus;
pub mod isa;
pub mod iss;
pub mod pipeline;
pub mod program;
pub mod lockstep;
pub mod stats;
pub mod progen;
pub mod fixtures;
pub mod bench;
