//! Inputs shared by the benchmarks.

use hkg_core::autodiff::Tensor;
use hkg_core::datagen::{synth_stream, SyntheticSpec};
use hkg_core::hierarchy::{
    bearing_tree, cavitation_tree, counts_from_leaf_totals, ClassCounts, LabelTree,
};
use hkg_core::signal::RawStream;

/// One second of synthetic choked-flow noise at the desk sample rate.
pub fn desk_stream() -> RawStream {
    let spec = SyntheticSpec::default();
    synth_stream("choked flow cavitation", &spec, 1)
        .expect("default spec is valid")
        .stream
}

/// Deterministic values in `[-1, 1)` with the given shape.
pub fn tensor(shape: &[usize], seed: u64) -> Tensor {
    let n: usize = shape.iter().product();
    let mut state = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    let data = (0..n)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// The two bundled trees with uneven leaf counts.
pub fn trees() -> Vec<(&'static str, LabelTree, ClassCounts)> {
    [
        ("cavitation", cavitation_tree()),
        ("bearing", bearing_tree()),
    ]
    .into_iter()
    .map(|(name, tree)| {
        let totals: Vec<_> = tree
            .leaves()
            .into_iter()
            .zip([151u64, 40, 93, 72, 60, 85])
            .collect();
        let counts = counts_from_leaf_totals(&tree, &totals).expect("leaves from the tree");
        (name, tree, counts)
    })
    .collect()
}
