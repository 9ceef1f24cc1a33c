//! Environment graph, plant and agent models, and the system file format.

mod explicit;
mod file;
mod system;

pub use explicit::*;
pub use file::*;
pub use system::*;
