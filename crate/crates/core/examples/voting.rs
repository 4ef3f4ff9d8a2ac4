//! Clip-level decisions from per-segment probabilities.

use melseed::classifier::{vote, Voting};

fn main() {
    let cases: [(&str, Vec<Vec<f32>>); 3] = [
        ("clear majority", vec![vec![0.1, 0.7, 0.2], vec![0.2, 0.6, 0.2], vec![0.0, 0.1, 0.9]]),
        ("confident minority", vec![vec![0.4, 0.3, 0.3], vec![0.4, 0.3, 0.3], vec![0.0, 0.0, 1.0]]),
        ("tied counts", vec![vec![0.6, 0.4, 0.0], vec![0.3, 0.7, 0.0]]),
    ];
    for (name, probs) in cases {
        println!(
            "{name:<20} majority -> {}, probability -> {}",
            vote(&probs, Voting::Majority),
            vote(&probs, Voting::Probability)
        );
    }
}
