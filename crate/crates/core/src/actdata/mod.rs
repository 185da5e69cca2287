//! Activation datasets: records, the on-disk format, prompt-level splits,
//! batching and the planted-signal generator.

mod batching;
mod format;
mod record;
mod synth;

pub use batching::{make_batches, Batch, BatchingStrategy};
pub use format::{dataset_paths, read_dataset, write_dataset, PayloadReader, FORMAT_VERSION, MAGIC};
pub use record::{ActivationRecord, Dataset, DatasetManifest, ResponseFilter, Split, SplitStats, Splits};
pub use synth::{synth_planted, HeadSignal, SynthParams};
