use braidmix::algebra::*;
use proptest::prelude::*;

fn word(strands: usize, max_len: usize) -> impl Strategy<Value = BraidWord> {
    prop::collection::vec((0..strands, any::<bool>()), 0..max_len).prop_map(move |raw| {
        let letters = raw
            .into_iter()
            .map(|(i, inv)| match (i, inv) {
                (0, _) => Generator::IDENTITY,
                (i, false) => Generator::positive(i),
                (i, true) => Generator::inverse_of(i),
            })
            .collect();
        BraidWord::new(strands, letters).unwrap()
    })
}

fn strands_and_word() -> impl Strategy<Value = BraidWord> {
    (2usize..8).prop_flat_map(|n| word(n, 24))
}

proptest! {
    #[test]
    fn reduction_is_idempotent(w in strands_and_word()) {
        let once = free_reduce(&w);
        prop_assert_eq!(free_reduce(&once), once);
    }

    #[test]
    fn reduction_preserves_permutation(w in strands_and_word()) {
        prop_assert_eq!(induced_permutation(&free_reduce(&w)), induced_permutation(&w));
    }

    #[test]
    fn word_times_inverse_is_identity(w in strands_and_word()) {
        let ww = w.concat(&w.inverse());
        prop_assert!(induced_permutation(&ww).is_identity());
        let reduced = free_reduce(&ww);
        prop_assert!(reduced.letters().iter().all(|g| g.is_identity()));
    }

    #[test]
    fn display_round_trips(w in strands_and_word()) {
        prop_assume!(!w.is_empty());
        let text = w.to_string();
        prop_assert_eq!(parse_braid_word(&text, w.strands()).unwrap(), w);
    }

    #[test]
    fn schedule_is_valid_and_preserves_permutation(w in strands_and_word()) {
        let steps = schedule_steps(&w, false).unwrap();
        let mut total = Permutation::identity(w.strands());
        for step in &steps {
            let active: Vec<_> = step.crossings().collect();
            for (a, x) in active.iter().enumerate() {
                for y in &active[a + 1..] {
                    prop_assert!(x.index().abs_diff(y.index()) >= 2);
                }
            }
            total = total.then(&step.permutation(w.strands()));
        }
        prop_assert_eq!(total, induced_permutation(&w));
        let letters = w.letters().len();
        prop_assert!(steps.len() <= letters.max(1));
    }

    /// Brute-force replay: swapping the agents on adjacent rows one letter at
    /// a time ends with the same row assignment as the induced permutation.
    #[test]
    fn permutation_matches_adjacent_swaps(w in (2usize..7).prop_flat_map(|n| word(n, 8))) {
        let n = w.strands();
        let mut agent_on_row: Vec<usize> = (0..n).collect();
        for g in w.letters().iter().filter(|g| !g.is_identity()) {
            agent_on_row.swap(g.index() - 1, g.index());
        }
        let perm = induced_permutation(&w);
        for (row, &agent) in agent_on_row.iter().enumerate() {
            prop_assert_eq!(perm.apply(agent), row);
        }
    }
}
