//! Sentence-reordering problem construction: take a paragraph in its
//! natural order, shuffle the sentences, and keep the inverse permutation
//! as the gold answer.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::iep::{Answer, Problem, ProblemBuilder};

/// Smallest paragraph worth jumbling; below this the answer is trivial.
pub const MIN_SENTENCES: usize = 3;
/// Largest supported paragraph: labels stay in A..H and the candidate space
/// stays enumerable or plannable.
pub const MAX_SENTENCES: usize = 8;

pub const QUESTION: &str =
    "The following sentences are shuffled. Arrange them into the most coherent paragraph.";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParajumbleError {
    #[error("need at least {MIN_SENTENCES} sentences, got {0}")]
    TooFewSentences(usize),
    #[error("at most {MAX_SENTENCES} sentences supported, got {0}")]
    TooManySentences(usize),
    #[error("sentence {0} is empty")]
    EmptySentence(usize),
}

/// Builds a sentence-reordering problem from `sentences` given in their
/// correct reading order. The shuffle is seeded and never the identity, so
/// the produced problem always requires work; the gold answer lists the
/// shuffled labels in original reading order.
pub fn make_parajumble(
    id: &str,
    sentences: &[String],
    seed: u64,
) -> Result<Problem, ParajumbleError> {
    if sentences.len() < MIN_SENTENCES {
        return Err(ParajumbleError::TooFewSentences(sentences.len()));
    }
    if sentences.len() > MAX_SENTENCES {
        return Err(ParajumbleError::TooManySentences(sentences.len()));
    }
    for (i, s) in sentences.iter().enumerate() {
        if s.trim().is_empty() {
            return Err(ParajumbleError::EmptySentence(i));
        }
    }

    let n = sentences.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // perm[slot] = original index of the sentence shown at that slot.
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(&mut rng);
        if perm.iter().enumerate().any(|(slot, &orig)| slot != orig) {
            break;
        }
    }

    let label_of = |slot: usize| char::from(b'A' + slot as u8).to_string();
    let mut builder = ProblemBuilder::ordering(id, QUESTION).source("parajumble");
    for (slot, &orig) in perm.iter().enumerate() {
        builder = builder.option(&label_of(slot), sentences[orig].trim());
    }
    // Gold: for each original position, the label of the slot holding it.
    let mut gold = vec![String::new(); n];
    for (slot, &orig) in perm.iter().enumerate() {
        gold[orig] = label_of(slot);
    }
    Ok(builder.gold(Answer::Ordering(gold)).build())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sentences(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("Sentence number {i}.")).collect()
    }

    /// Reads the options back in gold-label order; must reproduce the
    /// original paragraph.
    fn reassemble(problem: &Problem) -> Vec<String> {
        let Some(Answer::Ordering(gold)) = &problem.gold else {
            panic!("parajumble gold must be an ordering");
        };
        gold.iter().map(|label| problem.options[label].clone()).collect()
    }

    #[test]
    fn round_trips_to_original_order() {
        let original = sentences(5);
        let problem = make_parajumble("pj", &original, 42).unwrap();
        assert_eq!(reassemble(&problem), original);
    }

    #[test]
    fn shuffle_is_never_identity() {
        for seed in 0..50 {
            let original = sentences(3);
            let problem = make_parajumble("pj", &original, seed).unwrap();
            let shown: Vec<String> = problem.options.values().cloned().collect();
            assert_ne!(shown, original, "seed {seed} produced identity order");
        }
    }

    #[test]
    fn same_seed_same_problem() {
        let original = sentences(6);
        let a = make_parajumble("pj", &original, 7).unwrap();
        let b = make_parajumble("pj", &original, 7).unwrap();
        assert_eq!(a, b);
        let c = make_parajumble("pj", &original, 8).unwrap();
        assert_ne!(a.options, c.options);
    }

    #[test]
    fn size_limits_are_enforced() {
        assert_eq!(
            make_parajumble("pj", &sentences(2), 0),
            Err(ParajumbleError::TooFewSentences(2))
        );
        assert_eq!(
            make_parajumble("pj", &sentences(9), 0),
            Err(ParajumbleError::TooManySentences(9))
        );
        let mut bad = sentences(4);
        bad[2] = "   ".into();
        assert_eq!(make_parajumble("pj", &bad, 0), Err(ParajumbleError::EmptySentence(2)));
    }

    proptest! {
        #[test]
        fn any_paragraph_round_trips(n in 3usize..=8, seed in 0u64..1000) {
            let original = sentences(n);
            let problem = make_parajumble("pj", &original, seed).unwrap();
            prop_assert_eq!(reassemble(&problem), original);
            // Gold uses every label exactly once.
            let Some(Answer::Ordering(gold)) = &problem.gold else { unreachable!() };
            let mut sorted = gold.clone();
            sorted.sort();
            let mut labels = problem.labels();
            labels.sort();
            prop_assert_eq!(sorted, labels);
        }
    }
}
