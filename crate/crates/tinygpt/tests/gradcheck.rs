use tinygpt::gradcheck::{numeric_grads, tensor_errors};
use tinygpt::{loss_and_grads, ModelConfig, Params64};

fn setup() -> (Params64, Vec<Vec<u32>>) {
    let cfg = ModelConfig { n_layers: 2, n_heads: 2, embed_dim: 16, block_size: 16, vocab_size: 8 };
    let batch = (0..2u32).map(|r| (0..17u32).map(|i| (i * 5 + r * 3 + i / 4) % 8).collect()).collect();
    (Params64::init(cfg, 42), batch)
}

#[test]
fn every_tensor_matches_central_differences() {
    let (p, batch) = setup();
    let errs = tensor_errors(&p, &batch, 1e-3).unwrap();
    assert_eq!(errs.len(), 15);
    for (name, e) in &errs {
        assert!(*e < 1e-4, "{name}: relative error {e:.3e}");
    }
}

#[test]
fn every_scalar_matches_with_fine_step() {
    // at h = 1e-3 truncation error dominates gradients of order 1e-5; a
    // finer step makes the element-wise comparison meaningful
    let (mut p, batch) = setup();
    let (_, analytic) = loss_and_grads(&p, &batch).unwrap();
    let numeric = numeric_grads(&mut p, &batch, 1e-5).unwrap();
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
        assert!(e < 1e-4, "element {i}: {a} vs {n}");
    }
}
