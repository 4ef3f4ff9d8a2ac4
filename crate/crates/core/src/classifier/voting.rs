//! Clip-level decisions from per-segment class probabilities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Voting {
    Majority,
    Probability,
}

impl Voting {
    pub const ALL: [Voting; 2] = [Voting::Majority, Voting::Probability];
}

impl fmt::Display for Voting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Voting::Majority => "majority",
            Voting::Probability => "probability",
        })
    }
}

impl FromStr for Voting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "majority" => Ok(Voting::Majority),
            "probability" => Ok(Voting::Probability),
            _ => Err(format!("unknown voting scheme '{s}' (expected majority or probability)")),
        }
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Combines per-segment probability vectors into one class label.
///
/// Majority voting takes the most frequent per-segment argmax; among tied
/// classes the larger summed probability wins, then the lower index.
/// Probability voting takes the argmax of the mean probability vector.
///
/// Panics if `probs` is empty or the vectors differ in length.
pub fn vote(probs: &[Vec<f32>], voting: Voting) -> usize {
    assert!(!probs.is_empty(), "cannot vote without segments");
    let classes = probs[0].len();
    assert!(probs.iter().all(|p| p.len() == classes), "ragged probability vectors");
    let mut sums = vec![0.0f64; classes];
    for p in probs {
        for (s, &v) in sums.iter_mut().zip(p) {
            *s += v as f64;
        }
    }
    match voting {
        Voting::Probability => {
            let mut best = 0;
            for c in 1..classes {
                if sums[c] > sums[best] {
                    best = c;
                }
            }
            best
        }
        Voting::Majority => {
            let mut counts = vec![0usize; classes];
            for p in probs {
                counts[argmax(p)] += 1;
            }
            let mut best = 0;
            for c in 1..classes {
                let better = counts[c] > counts[best]
                    || (counts[c] == counts[best] && sums[c] > sums[best]);
                if better {
                    best = c;
                }
            }
            best
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(c: usize, n: usize, p: f32) -> Vec<f32> {
        let rest = (1.0 - p) / (n - 1) as f32;
        (0..n).map(|i| if i == c { p } else { rest }).collect()
    }

    #[test]
    fn majority_takes_the_mode() {
        let probs = vec![one_hot(3, 10, 0.6), one_hot(3, 10, 0.5), one_hot(7, 10, 0.99)];
        assert_eq!(vote(&probs, Voting::Majority), 3);
    }

    #[test]
    fn single_segment_agrees_across_schemes() {
        let p = vec![vec![0.1, 0.2, 0.6, 0.1]];
        assert_eq!(vote(&p, Voting::Majority), 2);
        assert_eq!(vote(&p, Voting::Probability), 2);
    }

    #[test]
    fn count_tie_broken_by_summed_probability() {
        // classes 0 and 1 win two segments each; sums are 1.1 and 1.3
        let probs = vec![
            vec![0.5, 0.3, 0.1, 0.1],
            vec![0.6, 0.2, 0.1, 0.1],
            vec![0.0, 0.4, 0.3, 0.3],
            vec![0.0, 0.4, 0.3, 0.3],
        ];
        assert_eq!(vote(&probs, Voting::Majority), 1);
        // mirrored so that the lower index carries the larger sum
        let mirrored: Vec<Vec<f32>> = probs
            .iter()
            .map(|p| vec![p[1], p[0], p[2], p[3]])
            .collect();
        assert_eq!(vote(&mirrored, Voting::Majority), 0);
    }

    #[test]
    fn full_tie_goes_to_lowest_index() {
        let probs = vec![vec![0.0, 0.6, 0.4], vec![0.0, 0.4, 0.6]];
        assert_eq!(vote(&probs, Voting::Majority), 1);
        assert_eq!(vote(&probs, Voting::Probability), 1);
    }

    #[test]
    fn segment_argmax_tie_goes_to_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        let probs = vec![vec![0.2, 0.4, 0.4], vec![0.2, 0.4, 0.4]];
        assert_eq!(vote(&probs, Voting::Majority), 1);
    }

    #[test]
    fn majority_and_probability_can_disagree() {
        // two weak votes for 0 against one confident vote for 2
        let probs = vec![vec![0.4, 0.3, 0.3], vec![0.4, 0.3, 0.3], vec![0.0, 0.0, 1.0]];
        assert_eq!(vote(&probs, Voting::Majority), 0);
        assert_eq!(vote(&probs, Voting::Probability), 2);
    }

    #[test]
    fn identical_inputs_identical_labels() {
        let probs: Vec<Vec<f32>> = (0..7).map(|i| one_hot(i % 3, 5, 0.7)).collect();
        for v in Voting::ALL {
            assert_eq!(vote(&probs, v), vote(&probs.clone(), v));
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("Majority".parse::<Voting>().unwrap(), Voting::Majority);
        assert!("mode".parse::<Voting>().is_err());
    }
}
