//! Writes the sources used by the interpreter golden test, one program per
//! record, records separated by a blank line.
use tinypy::{concept_profile, generate_corpus, GrammarProfile};

const SEED: u64 = 20_240_611;

fn main() {
    let mut all = generate_corpus(&GrammarProfile::default(), 4000, SEED).unwrap();
    for level in 1..=6 {
        all.extend(generate_corpus(&concept_profile(level).unwrap(), 1000, SEED + level as u64).unwrap());
    }
    for s in all {
        print!("{}\n", s.source);
    }
}
