//! Invariant battery runnable from the command line: the library-wide
//! contracts checked in bulk on seeded random instances.

use num_complex::Complex64;

use ris_mimo::autoencoder::{train, ModelDims, TrainConfig};
use ris_mimo::channel::{reflection_matrix, sample_channels, PhaseConfig};
use ris_mimo::modelbased::{design_link, optimize_phases, water_filling};
use ris_mimo::numerics::{frobenius_norm, hermitian, matmul, svd, CMatrix};
use ris_mimo::rng::{complex_gaussian, substream, StreamKind};
use rand::Rng;

struct Check {
    name: &'static str,
    run: fn() -> Result<(), String>,
}

fn unit_modulus() -> Result<(), String> {
    let mut rng = substream(101, StreamKind::Misc, 0);
    for _ in 0..1000 {
        let theta = PhaseConfig::random(16, &mut rng);
        let m = reflection_matrix(&theta);
        for i in 0..16 {
            let mag = m[(i, i)].norm();
            if (mag - 1.0).abs() > 1e-12 {
                return Err(format!("reflection magnitude {mag}"));
            }
        }
    }
    Ok(())
}

fn feasibility_bound() -> Result<(), String> {
    let mut rng = substream(101, StreamKind::Misc, 1);
    for _ in 0..1000 {
        let csi = sample_channels(&mut rng, 8, 4, 2);
        let theta = PhaseConfig::random(8, &mut rng);
        let cascade = ris_mimo::channel::effective_channel(&csi, &theta)
            .map_err(|e| e.to_string())?;
        // random precoder normalized to ||F||_F^2 = n_streams
        let n_streams = 2;
        let mut f = CMatrix::from_fn(4, n_streams, |_, _| complex_gaussian(&mut rng));
        let norm = frobenius_norm(&f);
        f = f.scaled(Complex64::new((n_streams as f64).sqrt() / norm, 0.0));
        let lhs = frobenius_norm(&matmul(&cascade, &f).map_err(|e| e.to_string())?);
        // sum of eigenvalues of cascade cascade^H equals its squared norm
        let gram = matmul(&cascade, &hermitian(&cascade)).map_err(|e| e.to_string())?;
        let trace: f64 = (0..gram.rows()).map(|i| gram[(i, i)].re).sum();
        let rhs = (n_streams as f64 * trace).sqrt();
        if lhs > rhs + 1e-9 {
            return Err(format!("bound violated: {lhs} > {rhs}"));
        }
    }
    Ok(())
}

fn monotone_ascent() -> Result<(), String> {
    let mut rng = substream(101, StreamKind::Misc, 2);
    for _ in 0..1000 {
        let csi = sample_channels(&mut rng, 8, 4, 2);
        let report = optimize_phases(&csi, 200, 1e-6, &mut rng);
        for w in report.objective_trace.windows(2) {
            if w[1] < w[0] - 1e-9 {
                return Err(format!("objective decreased {} -> {}", w[0], w[1]));
            }
        }
        if report.objective_trace.last() < report.objective_trace.first() {
            return Err("final objective below initial".into());
        }
    }
    Ok(())
}

fn water_filling_sums() -> Result<(), String> {
    let mut rng = substream(101, StreamKind::Misc, 3);
    for _ in 0..1000 {
        let mut sigma: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..4.0)).collect();
        sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let p = water_filling(&sigma, 4.0, 2, rng.random_range(0.05..4.0))
            .map_err(|e| e.to_string())?;
        let sum: f64 = p.iter().sum();
        if (sum - 2.0).abs() > 1e-9 {
            return Err(format!("power fractions sum {sum}"));
        }
    }
    Ok(())
}

fn svd_contract() -> Result<(), String> {
    let mut rng = substream(101, StreamKind::Misc, 4);
    for trial in 0..1000 {
        let shapes = [(4, 2), (2, 4), (6, 6), (8, 3)];
        let (rows, cols) = shapes[trial % shapes.len()];
        let a = CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(&mut rng));
        let f = svd(&a).map_err(|e| e.to_string())?;
        let err = frobenius_norm(&f.reconstruct().sub(&a).map_err(|e| e.to_string())?);
        if err > 1e-10 * frobenius_norm(&a) {
            return Err(format!("reconstruction error {err}"));
        }
    }
    Ok(())
}

fn exact_recovery() -> Result<(), String> {
    let mut rng = substream(101, StreamKind::Misc, 5);
    for _ in 0..100 {
        let csi = sample_channels(&mut rng, 16, 4, 2);
        let report = optimize_phases(&csi, 200, 1e-6, &mut rng);
        let design =
            design_link(&csi, &report.theta, 4.0, 1e-12, 2).map_err(|e| e.to_string())?;
        let s = [Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)];
        let cascade = ris_mimo::channel::effective_channel(&csi, &report.theta)
            .map_err(|e| e.to_string())?;
        let tx = matmul(&cascade, &design.precoder).map_err(|e| e.to_string())?;
        let gain = (4.0f64 / 2.0).sqrt();
        let received: Vec<Complex64> =
            (0..2).map(|r| gain * (tx[(r, 0)] * s[0] + tx[(r, 1)] * s[1])).collect();
        let out = design.equalize(&received);
        for m in 0..2 {
            if (out[m] - s[m]).norm() > 1e-9 {
                return Err(format!("stream {m} error {}", (out[m] - s[m]).norm()));
            }
        }
    }
    Ok(())
}

fn training_power_contract() -> Result<(), String> {
    let config = TrainConfig {
        dims: ModelDims { mod_order: 2, n_streams: 2, n_tx: 2, n_rx: 2, n_ris: 4 },
        epochs: 1,
        batch_size: 100,
        n_samples: 1000,
        seed: 5,
        ..TrainConfig::default()
    };
    let (_, trace) = train(&config).map_err(|e| e.to_string())?;
    let gap = trace.max_power_gap();
    if gap > 1e-9 {
        return Err(format!("power gap {gap}"));
    }
    Ok(())
}

/// Runs the whole battery, printing one line per check. Returns the failure
/// count.
pub fn run_selftest() -> usize {
    let checks = [
        Check { name: "reflection coefficients are unit modulus", run: unit_modulus },
        Check { name: "cascade norm feasibility bound", run: feasibility_bound },
        Check { name: "phase ascent is monotone", run: monotone_ascent },
        Check { name: "water-filling fractions sum to stream count", run: water_filling_sums },
        Check { name: "SVD factor contract", run: svd_contract },
        Check { name: "noiseless design recovers streams", run: exact_recovery },
        Check { name: "training batch power contract", run: training_power_contract },
    ];
    let mut failures = 0;
    for check in &checks {
        match (check.run)() {
            Ok(()) => println!("ok   {}", check.name),
            Err(msg) => {
                failures += 1;
                println!("FAIL {}: {msg}", check.name);
            }
        }
    }
    failures
}
