//! Regenerate the bundled toy dataset and the external-model score file.
//!
//! ```text
//! cargo run -p shapaudit-cli --example generate_toy
//! ```
//!
//! Writes `data/toy.csv` (800 transactions, 7 feature columns plus time /
//! account roles) and `data/toy_nn_scores.csv`, a stand-in for an
//! externally trained model: scores plus additive attributions from a
//! noisy linear surrogate. Both files are deterministic.

use std::io::Write;
use std::path::Path;

use shapaudit_core::dataset::write_table_csv;
use shapaudit_core::synth::{generate_fraud_table, SynthConfig};

fn main() -> std::io::Result<()> {
    let table = generate_fraud_table(&SynthConfig {
        n_rows: 800,
        n_informative: 4,
        n_noise: 3,
        fraud_rate: 0.10,
        n_accounts: 60,
        seed: 20_240_817,
    });

    std::fs::create_dir_all("data")?;
    write_table_csv(
        Path::new("data/toy.csv"),
        &table,
        "isFraud",
        Some("t"),
        Some("acct"),
    )
    .map_err(std::io::Error::other)?;

    // the "nn": a noisy linear margin over the informative features, with
    // exact additive attributions against the feature means
    let d = table.n_features();
    let mut weights = vec![0.0; d];
    for i in 0..4 {
        let j = table.feature_index(&format!("inf_{i}")).unwrap();
        weights[j] = 1.4 - 0.25 * i as f64;
    }
    let means: Vec<f64> = (0..d)
        .map(|j| table.rows().iter().map(|r| r[j]).sum::<f64>() / table.n_rows() as f64)
        .collect();
    let base_margin: f64 = weights.iter().zip(&means).map(|(w, m)| w * m).sum();

    let mut out = std::io::BufWriter::new(std::fs::File::create("data/toy_nn_scores.csv")?);
    let mut header = String::from("score,phi0");
    for name in table.feature_names() {
        header.push_str(",phi_");
        header.push_str(name);
    }
    writeln!(out, "{header}")?;
    let mut jitter_state = 0xfeed_beefu64;
    for row in table.rows() {
        // deterministic per-row jitter so the nn disagrees with the gbdt
        jitter_state = jitter_state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let jitter = ((jitter_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 1.2;

        let margin: f64 =
            weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + jitter;
        let score = 1.0 / (1.0 + (-(margin - base_margin)).exp());
        let mut line = format!("{score},{base_margin}");
        for (w, (x, m)) in weights.iter().zip(row.iter().zip(&means)) {
            line.push(',');
            line.push_str(&(w * (x - m) + jitter / d as f64).to_string());
        }
        writeln!(out, "{line}")?;
    }
    println!("wrote data/toy.csv and data/toy_nn_scores.csv");
    Ok(())
}
