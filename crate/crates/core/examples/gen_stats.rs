//! Prints level frequencies and lengths for the default profile, and mean OM
//! per concept level.
use tinypy::{concept_profile, generate_corpus, DifficultyLevel, GrammarProfile};

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let c = generate_corpus(&GrammarProfile::default(), n, 1).unwrap();
    for l in DifficultyLevel::ALL {
        let xs: Vec<_> = c.iter().filter(|s| s.level == l).collect();
        let len = xs.iter().map(|s| s.render().len()).sum::<usize>() as f64 / xs.len().max(1) as f64;
        let om = xs.iter().map(|s| s.score.om).sum::<f64>() / xs.len().max(1) as f64;
        println!("{l}: {:.2}%  mean chars {len:.1}  mean om {om:.2}", 100.0 * xs.len() as f64 / n as f64);
    }
    for level in 1..=6 {
        let c = generate_corpus(&concept_profile(level).unwrap(), 2000, 1).unwrap();
        let om = c.iter().map(|s| s.score.om).sum::<f64>() / c.len() as f64;
        let len = c.iter().map(|s| s.render().len()).sum::<usize>() as f64 / c.len() as f64;
        println!("concept {level}: mean om {om:.3}  mean chars {len:.1}");
    }
}
