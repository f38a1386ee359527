//! File formats, parallel evaluation and the command-line front end for
//! [`plangraph_core`].

pub mod canonical;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod record;
pub mod render;
pub mod table;

use std::fmt::Write as _;
use std::num::NonZeroUsize;
use std::thread;
use std::time::Instant;

use plangraph_core::graphs::{dump_grid, GraphKind};
use plangraph_core::metrics::{displacement_errors, MetricAccumulator, MetricReport, SampleErrors};
use plangraph_core::scene::{window_samples, EgoSelection, Recording};
use plangraph_core::{DatasetConfig, Model, PreparedSample, Sample};

pub use error::{Error, Result};

/// Windows every recording, in order.
pub fn prepare_samples(recordings: &[Recording], config: &DatasetConfig, ego: EgoSelection) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for r in recordings {
        out.extend(window_samples(r, config, ego)?);
    }
    Ok(out)
}

/// Centres each sample and builds its graphs.
pub fn prepare_all(samples: &[Sample], config: &DatasetConfig) -> Result<Vec<PreparedSample>> {
    samples
        .iter()
        .map(|s| PreparedSample::new(s, config.distance_threshold, config.beta_degrees).map_err(Error::from))
        .collect()
}

/// Seconds since the first call, for run records.
pub fn wall_clock() -> impl FnMut() -> f64 {
    let start = Instant::now();
    move || start.elapsed().as_secs_f64()
}

pub fn default_threads() -> usize {
    thread::available_parallelism().map_or(1, NonZeroUsize::get)
}

/// Like [`plangraph_core::metrics::evaluate`] but predicts on `threads`
/// workers. Errors are summed in sample order, so the report does not depend
/// on the thread count.
pub fn evaluate_parallel(model: &Model, data: &[PreparedSample], threads: usize) -> Result<MetricReport> {
    let chunk = data.len().div_ceil(threads.max(1)).max(1);
    let per_chunk: Vec<plangraph_core::Result<Vec<SampleErrors>>> = thread::scope(|scope| {
        let handles: Vec<_> = data
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|p| model.predict(p).map(|pred| displacement_errors(&pred, &p.sample)))
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut acc = MetricAccumulator::new();
    let mut samples = data.iter();
    for part in per_chunk {
        for errors in part? {
            let prep = samples.next().expect("one result per sample");
            acc.add(&prep.sample, &errors);
        }
    }
    Ok(acc.finish())
}

/// Raw and normalized adjacency matrices of one sample as text.
pub fn dump_graphs(prep: &PreparedSample) -> String {
    let mut s = String::new();
    for kind in GraphKind::ALL {
        let _ = writeln!(s, "# {} raw", kind.as_str());
        s.push_str(&dump_grid(prep.adjacency.get(kind)));
        let _ = writeln!(s, "# {} normalized", kind.as_str());
        s.push_str(&dump_grid(prep.normalized(kind)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use plangraph_core::metrics::evaluate;
    use plangraph_core::synthetic::synthetic_dataset;
    use plangraph_core::ModelConfig;

    #[test]
    fn parallel_evaluation_matches_serial_bitwise() {
        let data = prepare_all(&synthetic_dataset(), &DatasetConfig::apollo()).unwrap();
        let mut cfg = ModelConfig::full(6, 6);
        cfg.channels = 4;
        let model = Model::new(cfg, 11).unwrap();
        let serial = evaluate(&model, &data).unwrap();
        for threads in [1, 3, 8, 20] {
            assert_eq!(evaluate_parallel(&model, &data, threads).unwrap(), serial);
        }
    }

    #[test]
    fn graph_dump_has_all_sections() {
        let data = prepare_all(&synthetic_dataset()[..1], &DatasetConfig::apollo()).unwrap();
        let text = dump_graphs(&data[0]);
        assert_eq!(text.matches("# ").count(), 8);
    }
}
