pub mod error;
pub mod fixtures;
pub mod lp;
pub mod market;
pub mod nfl;
pub mod oracle;
pub mod pricing;
pub mod random;
pub mod scenario;
pub mod settings;
pub mod tree;

pub use error::{Error, Result};
pub use settings::Settings;
