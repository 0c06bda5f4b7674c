use nrx_core::harness::{run_training, Config};

// Trailing mean of `w` losses ending at index `end` (exclusive).
fn moving_average(loss: &[f64], end: usize, w: usize) -> f64 {
    loss[end - w..end].iter().sum::<f64>() / w as f64
}

#[test]
fn short_run_reduces_loss() {
    let overrides: Vec<String> = [
        "slot.n_subcarriers=24",
        "slot.n_rx=2",
        "channel.model=\"flat-rayleigh\"",
        "train.batch_size=8",
        "train.max_layers=2",
        "train.snr_db_min=5.0",
        "train.snr_db_max=15.0",
        "train.steps=500",
        "train.seed=5",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    let cfg = Config::parse("", &overrides).unwrap();
    let mut log = Vec::new();
    let mut losses = Vec::new();
    run_training(&cfg, &mut log, |s, _| {
        losses.push(s.loss);
        Ok(())
    })
    .unwrap();
    assert_eq!(losses.len(), 500);
    assert_eq!(String::from_utf8(log).unwrap().lines().count(), 501);
    let start = moving_average(&losses, 50, 50);
    let end = moving_average(&losses, 500, 50);
    println!("moving-average(50) loss: start {start:.4}, end {end:.4}");
    assert!(end < 0.9 * start, "start {start}, end {end}");
}
