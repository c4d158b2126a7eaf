// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Trains a Toffoli pulse on the three-qubit preset and prints progress.
//!
//! usage: train_preset <mu=VALUE | r=VALUE> [seed] [learning_rate] [iterations] [final_learning_rate]

use rsgrape::loss::{GateProblem, InfidelityVariant, Sensitivity, UtilityFamily, UtilitySpec};
use rsgrape::optimizer::{OptimizerConfig, Trainer};
use rsgrape::sampler::{DistributionSpec, SampleStream, StreamTag};
use rsgrape::system::{initial_schedule, three_qubit_preset, toffoli_gate, PulseShape};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = args.first().map(String::as_str).unwrap_or("mu=1");
    let seed: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let lr: f64 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(0.01);
    let iterations: u64 = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or(10_000);
    let lr_final: Option<f64> = args.get(4).map(|s| s.parse()).transpose()?;

    let sensitivity = match mode.split_once('=') {
        Some(("mu", v)) => Sensitivity::Fixed(UtilitySpec::exponential(v.parse()?)?),
        Some(("r", v)) => Sensitivity::Adaptive {
            family: UtilityFamily::Exponential,
            r_star: v.parse()?,
        },
        _ => return Err(format!("unrecognised mode {mode:?}").into()),
    };

    let problem = GateProblem::new(three_qubit_preset(), toffoli_gate(), InfidelityVariant::PhaseInsensitive)?;
    let start = initial_schedule(seed, &PulseShape::with_default_ranges(6, 100, 1.0))?;
    let stream = SampleStream::new(DistributionSpec::uniform_box(2, -0.2, 0.2)?, seed, StreamTag::Train);
    let mut config = OptimizerConfig::new(sensitivity, 10);
    config.adam.learning_rate = lr;
    config.max_iterations = iterations;
    config.learning_rate_final = lr_final;

    let mut trainer = Trainer::new(&problem, start, stream, config)?;
    let t0 = std::time::Instant::now();
    trainer.run_with(|st| {
        let r = st.records.last().expect("one record per step");
        if r.iteration % 250 == 0 {
            println!(
                "{:6} j_mean={:.3e} j_max={:.3e} mu={:.3e} |g|={:.3e} t={:.1}s",
                r.iteration,
                r.j_mean,
                r.j_max,
                r.mu,
                r.grad_norm,
                t0.elapsed().as_secs_f64()
            );
        }
        Ok(())
    })?;
    let trace = trainer.into_trace();
    if let Some((k, best)) = trace.best_mean() {
        println!("best j_mean {best:.3e} at iteration {k}; {:.1}s", trace.wall_time_secs);
    }
    let amps = trace.schedule.amplitudes().as_slice();
    let peak = amps.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rms = (amps.iter().map(|v| v * v).sum::<f64>() / amps.len() as f64).sqrt();
    println!("final amplitudes: peak {peak:.1} rad/us, rms {rms:.1} rad/us");
    Ok(())
}
