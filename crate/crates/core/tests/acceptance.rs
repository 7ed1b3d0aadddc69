// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Runs criteria 1 to 9 in order and prints one line each:
//! `criterion N: PASS|FAIL|INFO <name> (<seconds>) <detail>`.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use siaf_core::accel::exec::{run_layer, ConvInput};
use siaf_core::accel::lif_unit::{unrolled_lif, Selectors, UnrolledLifUnit};
use siaf_core::accel::plan::{plan_conv3x3, plan_pointwise, JobKind};
use siaf_core::accel::tile::{conv3x3_tile, matmul_tile, FILL_CYCLES, LANES};
use siaf_core::accel::AccelConfig;
use siaf_core::cli::{self, Cli};
use siaf_core::gen::{generate, random_image, SizeClass};
use siaf_core::memory::{BankSet, SramBudget};
use siaf_core::reference::layers::{conv_bn_3x3, encode_conv_3x3};
use siaf_core::reference::lif::{lif_seq, LifParams};
use siaf_core::reference::model::{model_forward_with, ForwardOptions, LayerSpec, ResidualOp};
use siaf_core::report::{run_document, stats_document, to_json, PUBLISHED_FRAMES_PER_SECOND};
use siaf_core::scheduler::{compare_schedules, simulate, Schedule};
use siaf_core::tensor::{bitplane_decompose, AccTensor, QTensor, SpikeTensor};

type Outcome = Result<String, String>;

/// Name, check, and whether the criterion is a pass/fail gate.
type Criterion = (&'static str, fn() -> Outcome, bool);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed < limit {
        Ok(())
    } else {
        Err(format!("took {:.2}s, limit {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()))
    }
}

/// Unrolled LIF equals the sequential decomposition, exhaustively.
fn unrolled_lif_equivalence() -> Outcome {
    let start = Instant::now();
    let grid = [-40, -3, 0, 7, 15, 64];
    let params = [LifParams { threshold: 16, leak_shift: 2 }, LifParams { threshold: 1, leak_shift: 1 }];
    let mut cases = 0;
    for p in params {
        for t in [4, 2, 1] {
            let unit = UnrolledLifUnit { params: p, selectors: Selectors::for_time_steps(t).unwrap() };
            for code in 0..6usize.pow(4) {
                let cur: [i32; 4] = std::array::from_fn(|k| grid[code / 6usize.pow(k as u32) % 6]);
                let out = unrolled_lif(cur, &unit).map_err(|e| e.to_string())?;
                for n in 0..4 / t {
                    let seq = AccTensor::new(&[t, 1], cur[n * t..(n + 1) * t].to_vec(), 0).unwrap();
                    let (s, m) = lif_seq(&seq, &p).unwrap();
                    for k in 0..t {
                        ensure!(
                            out.spikes[n * t + k] == s.bit(k),
                            "selectors {} currents {cur:?}: stage {} differs",
                            unit.selectors.as_str(),
                            n * t + k
                        );
                    }
                    ensure!(out.membranes[n * t + t - 1] == m.data()[0], "membrane differs for {cur:?}");
                }
                cases += 1;
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("{cases} cases (6^4 x 3 modes x {} threshold settings)", params.len()))
}

/// Every post-encoding activation is binary with IAND; addition breaks it.
fn all_spike_invariant() -> Outcome {
    let start = Instant::now();
    let mut broken = 0;
    for seed in 0..100u64 {
        let t = [1, 2, 4][seed as usize % 3];
        let cfg = generate(SizeClass::Tiny, seed, t).map_err(|e| e.to_string())?;
        let img = random_image(cfg.input, seed);
        let (_, trace) =
            model_forward_with(&img, &cfg, ForwardOptions { residual: ResidualOp::Iand }).map_err(|e| e.to_string())?;
        let bad = trace.non_binary_activations();
        ensure!(bad.is_empty(), "seed {seed}: non-binary activations {bad:?}");
        let (_, trace) =
            model_forward_with(&img, &cfg, ForwardOptions { residual: ResidualOp::Add }).map_err(|e| e.to_string())?;
        if !trace.non_binary_activations().is_empty() {
            broken += 1;
        }
    }
    ensure!(broken > 0, "additive residual never produced a non-binary activation");
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("100 models binary with IAND; additive residual non-binary in {broken}/100"))
}

/// `siaf verify` exits 0 across sizes, schedules and time steps.
fn verify_bit_exact() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = dir.path().join("report.json");
    let mut seeds = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut runs = 0;
    for _ in 0..100 {
        let seed: u64 = seeds.gen_range(0..1_000_000);
        for size in ["tiny", "small"] {
            let config = dir.path().join(format!("{size}.toml"));
            let weights = dir.path().join(format!("{size}.siaf"));
            let (c, w, r) = (config.to_str().unwrap(), weights.to_str().unwrap(), report.to_str().unwrap());
            let seed_s = seed.to_string();
            let code = cli::run(Cli::parse_from([
                "siaf",
                "gen",
                "--size",
                size,
                "--seed",
                &seed_s,
                "--config",
                c,
                "--weights",
                w,
            ]));
            ensure!(code == 0, "gen {size} seed {seed} exited {code}");
            for sched in ["serial", "parallel"] {
                for t in ["1", "2", "4"] {
                    let code = cli::run(Cli::parse_from([
                        "siaf",
                        "verify",
                        "--config",
                        c,
                        "--weights",
                        w,
                        "--schedule",
                        sched,
                        "--timesteps",
                        t,
                        "--seed",
                        &seed_s,
                        "--report",
                        r,
                    ]));
                    ensure!(code == 0, "verify {size} seed {seed} {sched} T={t} exited {code}");
                    runs += 1;
                }
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!("{runs} verify runs exited 0 (100 seeds x tiny/small x serial/parallel x T=1,2,4)"))
}

/// Exact cycle counts of the 3x3 tile, the 1x1 group and the encoding layer.
fn cycle_laws() -> Outcome {
    let cfg = AccelConfig::default();
    // 3x3 strip: after the fill, every cycle retires one full 8-lane output row
    let h = 16;
    let tile = conv3x3_tile(&|y, x| y >= 0 && x >= 0 && y < h as isize && x < 8, h, 0, [1; 9]).unwrap();
    ensure!(tile.fill_cycles == FILL_CYCLES, "fill {}", tile.fill_cycles);
    let steady = tile.cycles - tile.fill_cycles;
    let outputs = tile.outputs.len() * LANES;
    ensure!(outputs as u64 == 8 * steady, "{outputs} outputs in {steady} steady cycles");
    let plan = plan_conv3x3("c", 1, 1, h, 8, 1, false, &Schedule::parallel(4).unwrap(), &cfg);
    ensure!(plan.jobs.len() == 1 && plan.jobs[0].cycles == h as u64 + FILL_CYCLES, "planned strip cycles");

    // one 1x1 reduction group of 9 channels over an 8x8 map
    let mm = matmul_tile(&|p, j| (p + j) % 3 == 0, 0..64, &[1; 9]).unwrap();
    ensure!(mm.cycles == 8, "1x1 tile took {} cycles", mm.cycles);
    let pw = plan_pointwise("p", JobKind::Conv1x1, 9, 1, 64, true, true, &Schedule::parallel(4).unwrap(), &cfg);
    ensure!(pw.compute_cycles() == 8 && pw.jobs.len() == 1, "1x1 plan took {} cycles", pw.compute_cycles());

    // encoding (8 bitplanes) against the same layer on spikes
    let mut ratios = Vec::new();
    for (c, oc, hh, w, t) in [(3, 8, 8, 8, 4), (3, 16, 32, 32, 4), (3, 4, 16, 16, 1), (1, 2, 5, 13, 2)] {
        for sched in [Schedule::serial(t), Schedule::parallel(t).unwrap()] {
            let enc = plan_conv3x3("e", c, oc, hh, w, 1, true, &sched, &cfg).cycles(&cfg);
            let spk = plan_conv3x3("s", c, oc, hh, w, 1, false, &sched, &cfg).cycles(&cfg);
            ensure!(enc == 8 * spk, "encoding {enc} vs spike {spk} cycles for {c}x{hh}x{w}");
            ratios.push(enc / spk);
        }
    }
    // and measured on the simulator
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let img = random_image([3, 8, 8], 4);
    let x = SpikeTensor::from_bits(&[4, 3, 8, 8], &(0..768).map(|_| r.gen_range(0..2)).collect::<Vec<u8>>()).unwrap();
    let weights = QTensor::new(&[4, 3, 3, 3], (0..108).map(|_| r.gen_range(-9..9)).collect(), -4).unwrap();
    let layer = LayerSpec::ConvBn3x3 { in_ch: 3, out_ch: 4, stride: 1, weights, bias: AccTensor::zeros(&[4], -12) };
    let sched = Schedule::parallel(4).unwrap();
    let lif = LifParams::for_scale(-12);
    let mut banks = BankSet::new(&SramBudget::default(), 0);
    let e = run_layer(&layer, &lif, ConvInput::Image(&img), "e", &cfg, &sched, &mut banks).unwrap();
    let s = run_layer(&layer, &lif, ConvInput::Spikes(&x), "s", &cfg, &sched, &mut banks).unwrap();
    ensure!(e.stats.cycles == 8 * s.stats.cycles, "simulated {} vs {}", e.stats.cycles, s.stats.cycles);
    Ok(format!(
        "3x3: {outputs} outputs / {steady} steady cycles = 8, fill {FILL_CYCLES}; 1x1 9ch x 8x8: 8 cycles; \
         encoding/spike = 8 in {} plans and simulated ({} / {})",
        ratios.len(),
        e.stats.cycles,
        s.stats.cycles
    ))
}

fn architecture_constants() -> Outcome {
    let a = AccelConfig::default();
    let kb = SramBudget::default().total_bytes() as f64 / 1024.0;
    ensure!(a.total_pes() == 3456, "{} PEs", a.total_pes());
    ensure!(a.clock_hz == 500_000_000 && a.ops_per_pe_cycle == 2, "clock or ops per cycle changed");
    ensure!(a.peak_gsops() == 3456.0, "{} GSOPS", a.peak_gsops());
    ensure!(kb == 139.25, "{kb} KB");
    Ok(format!("{} PEs, {} GSOPS at 500 MHz, SRAM {kb} KB", a.total_pes(), a.peak_gsops()))
}

fn schedule_claims() -> Outcome {
    let accel = AccelConfig::default();
    let mut detail = Vec::new();
    for (size, seed) in [(SizeClass::Tiny, 1u64), (SizeClass::Small, 2)] {
        for t in [4usize, 2, 1] {
            let cfg = generate(size, seed, t).map_err(|e| e.to_string())?;
            let img = random_image(cfg.input, seed);
            let c = compare_schedules(&cfg, &accel, &img, &SramBudget::default()).map_err(|e| e.to_string())?;
            ensure!(c.logits_match, "{size} T={t}: logits differ between schedules");
            for l in &c.layers {
                let factor = if l.label == "head" { 1 } else { t as u64 };
                ensure!(
                    l.serial_weight_reads == factor * l.parallel_weight_reads,
                    "{size} T={t} {}: serial {} vs parallel {} weight reads",
                    l.label,
                    l.serial_weight_reads,
                    l.parallel_weight_reads
                );
            }
            let expected = 100.0 * (1.0 - 1.0 / t as f64);
            ensure!(
                c.weight_access_reduction_pct == expected,
                "{size} T={t}: reduction {}% expected {expected}%",
                c.weight_access_reduction_pct
            );
            let par_mem = c.parallel.membrane_reads + c.parallel.membrane_writes;
            let ser_mem = c.serial.membrane_reads + c.serial.membrane_writes;
            ensure!(par_mem == 0, "{size} T={t}: parallel membrane traffic {par_mem}");
            ensure!(t == 1 || ser_mem > 0, "{size} T={t}: serial membrane traffic is zero");
            if size == SizeClass::Tiny {
                detail.push(format!(
                    "T={t}: {:.1}% fewer weight reads, membrane {ser_mem} vs {par_mem}",
                    c.weight_access_reduction_pct
                ));
            }
        }
    }
    Ok(format!("{}; logits identical; published 43.2% reported only", detail.join("; ")))
}

fn bitplane_oracle() -> Outcome {
    let cfg = AccelConfig::default();
    let mut r = ChaCha8Rng::seed_from_u64(7);
    for i in 0..50u64 {
        let (c, h, w, oc) = (r.gen_range(1..4), r.gen_range(2..12), r.gen_range(2..12), r.gen_range(1..5));
        let t = [1, 2, 4][r.gen_range(0..3)];
        let img = random_image([c, h, w], 1000 + i);
        let weights =
            QTensor::new(&[oc, c, 3, 3], (0..oc * c * 9).map(|_| r.gen_range(-128..=127)).collect(), -4).unwrap();
        let bias = AccTensor::new(&[oc], (0..oc).map(|_| r.gen_range(-999..999)).collect(), -12).unwrap();
        let direct = encode_conv_3x3(&img, t, &weights, &bias, 1).map_err(|e| e.to_string())?;

        // sum over planes of (plane conv << b), then bias
        let zero = AccTensor::zeros(&[oc], -12);
        let mut acc: Vec<i64> = vec![0; oc * h * w];
        for (b, plane) in bitplane_decompose(&img).iter().enumerate() {
            let part = conv_bn_3x3(plane, &weights, &zero, 1).unwrap();
            for (a, &v) in acc.iter_mut().zip(part.data()) {
                *a += (v as i64) << b;
            }
        }
        for tt in 0..t {
            for (j, &a) in acc.iter().enumerate() {
                let want = a + bias.data()[j / (h * w)] as i64;
                ensure!(direct.data()[tt * acc.len() + j] as i64 == want, "image {i}: element {j} differs");
            }
        }

        let layer = LayerSpec::ConvBn3x3 { in_ch: c, out_ch: oc, stride: 1, weights, bias };
        let sched = if i % 2 == 0 { Schedule::serial(t) } else { Schedule::parallel(t).unwrap() };
        let mut banks = BankSet::new(&SramBudget::default(), direct.len() * 4);
        let run = run_layer(&layer, &LifParams::for_scale(-12), ConvInput::Image(&img), "e", &cfg, &sched, &mut banks)
            .map_err(|e| e.to_string())?;
        ensure!(run.currents == direct, "image {i}: simulator bitplane path differs");
    }
    Ok("50 images: bitplane sum and simulated encoding layer equal direct 8-bit convolution".into())
}

fn determinism() -> Outcome {
    let accel = AccelConfig::default();
    let render = |seed: u64| -> Result<Vec<String>, String> {
        let mut docs = Vec::new();
        for size in [SizeClass::Tiny, SizeClass::Small] {
            let cfg = generate(size, seed, 4).map_err(|e| e.to_string())?;
            let img = random_image(cfg.input, seed);
            for sched in [Schedule::serial(4), Schedule::parallel(4).unwrap()] {
                let e = simulate(&cfg, &img, &accel, &sched, &SramBudget::default()).map_err(|e| e.to_string())?;
                docs.push(to_json(&run_document(&cfg, &accel, &Default::default(), &e, None)));
            }
        }
        Ok(docs)
    };
    let (a, b) = (render(99)?, render(99)?);
    ensure!(a == b, "reports differ between runs");
    ensure!(a != render(100)?, "different seeds gave identical reports");
    Ok(format!("{} reports byte-identical ({} bytes)", a.len(), a.iter().map(String::len).sum::<usize>()))
}

fn published_frame_rate() -> Outcome {
    let cfg = generate(SizeClass::Paper384, 0, 4).map_err(|e| e.to_string())?;
    let doc = stats_document(&cfg, &AccelConfig::default(), &Schedule::parallel(4).unwrap(), &SramBudget::default())
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "paper-384: {} cycles/frame = {:.2} frames/s vs published {PUBLISHED_FRAMES_PER_SECOND} ({:.2}x); {}",
        doc.cycles_per_frame, doc.frames_per_second, doc.published_ratio, doc.published_note
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("unrolled LIF equals sequential LIF", unrolled_lif_equivalence, true),
        ("all-spike invariant", all_spike_invariant, true),
        ("reference and simulator bit-exact", verify_bit_exact, true),
        ("cycle laws", cycle_laws, true),
        ("architecture constants", architecture_constants, true),
        ("schedule weight and membrane traffic", schedule_claims, true),
        ("bitplane encoding oracle", bitplane_oracle, true),
        ("deterministic reports", determinism, true),
        ("frame rate against published figure", published_frame_rate, false),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut out = std::io::stdout();
    for (i, (name, check, gate)) in criteria.into_iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let (status, detail) = match (&result, gate) {
            (Ok(d), true) => ("PASS", d.as_str()),
            (Ok(d), false) => ("INFO", d.as_str()),
            (Err(e), _) => ("FAIL", e.as_str()),
        };
        if result.is_err() {
            failed += 1;
        }
        let _ = writeln!(out, "criterion {n}: {status} {name} ({secs:.2}s) {detail}");
        let _ = out.flush();
    }
    if failed > 0 {
        let _ = writeln!(out, "acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
}
