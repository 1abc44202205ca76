//! Per-sample feature blocks on disk and in memory.
//!
//! A dataset directory holds `manifest.json` plus one `<block>.f32` file per
//! block: `N × dim` little-endian binary32 values, row `i` belonging to
//! `samples[i]`. Values are widened to `f64` on load.

mod io;
mod schema;
mod split;
mod synth;

pub use io::{load_dataset, merge_fragment, read_block_file, save_dataset, write_block_file};
pub use io::{BlockFragment, Manifest, SampleMeta, MANIFEST_FILE, MANIFEST_VERSION};
pub use schema::{assemble_aux, BlockSchema, Dataset, FeatureRecord, Split, KNOWN_ROLES, REID};
pub use split::{split_random, SplitMode, SplitSpec};
pub use synth::{synth_generate, Signal, SynthBlock, SynthSpec};
