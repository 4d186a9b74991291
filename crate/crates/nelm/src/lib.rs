pub use nelm_core;
