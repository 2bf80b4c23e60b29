//! Interpreter output against CPython on the programs in data/golden.txt
//! (see data/make_golden.py).
use tinypy::corpus::parse_split;
use tinypy::{execute, parse, DEFAULT_STEP_BUDGET};

#[test]
fn matches_reference_python() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/golden.txt");
    let text = std::fs::read_to_string(path).unwrap();
    let golden = parse_split(&text, path.as_ref()).unwrap();
    assert_eq!(golden.len(), 10_000);
    let mut mismatched = Vec::new();
    for (i, g) in golden.iter().enumerate() {
        let out = execute(&parse(&g.source).unwrap(), DEFAULT_STEP_BUDGET).unwrap();
        if out.lines != g.output_lines {
            mismatched.push(i);
        }
    }
    assert!(mismatched.is_empty(), "{} mismatches, first at {:?}", mismatched.len(), mismatched.first());
}
