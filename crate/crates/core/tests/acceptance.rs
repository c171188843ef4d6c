//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero when any fails.
//!
//! `ACCEPTANCE_ONLY=1,2,7` restricts the run to the listed criteria. The
//! full-scene criteria (4 and 5) take several minutes each.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use common::*;
use patch_fdtd::config::RunConfig;
use patch_fdtd::constants::{mm_to_m, GHZ, MHZ};
use patch_fdtd::design::{design, resonant_frequency, DesignOptions, DesignSpec, WidthMode};
use patch_fdtd::fdtd::*;
use patch_fdtd::geometry::{voxelize, AntennaScene, SrrSlotSpec, SwitchState};
use patch_fdtd::pipeline::{reference_bands, run_pipeline, vswr_consistency, PipelineOutcome};
use patch_fdtd::spectra::{dft, find_bands, frequency_axis, reflection_spectrum};
use proptest::test_runner::{Config, TestRunner};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Design equations against the published parameter table.
fn criterion_1() -> Verdict {
    let spec = DesignSpec::from_ghz_mm(6.0, 4.4, 1.55).map_err(|e| e.to_string())?;
    let r = design(&spec, DesignOptions { width_mode: WidthMode::Fixed(mm_to_m(11.6)), fringing: true }).map_err(|e| e.to_string())?;
    let (e, dl, l) = (r.effective_permittivity, r.length_extension_mm(), r.patch_length_mm());
    check(
        (e - 3.75).abs() <= 0.01 && (dl - 0.692).abs() <= 0.002 && (11.45..=11.65).contains(&l),
        format!("eps_eff {e:.4} (3.75 +/- 0.01), dL {dl:.4} mm (0.692 +/- 0.002), L {l:.3} mm in [11.45, 11.65]"),
    )
}

/// VSWR implied by the published S11 against the published VSWR.
fn criterion_2() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut excluded = Vec::new();
    for (r, implied) in vswr_consistency(&reference_bands()) {
        if !r.vswr_consistent {
            excluded.push(format!("{} {:.1} GHz", r.state, r.frequency_ghz));
            continue;
        }
        let good = (implied - r.vswr).abs() <= 0.01;
        ok &= good;
        parts.push(format!("{:.2} dB -> {implied:.3} (pub {:.3})", r.s11_db, r.vswr));
    }
    ok &= parts.len() == 3;
    check(ok, format!("{}; excluded as inconsistent: {}", parts.join(", "), excluded.join(", ")))
}

/// Solver physics oracles.
fn criterion_3() -> Verdict {
    let t = Instant::now();
    let speed = pulse_speed_ratio();
    let refl = cpml_reflection_db();
    let cav = cavity_peak();
    let cav_exact = cavity_te101(0.020, 0.010);
    let run = run_dipole(1.0, 1, 6000);
    let dirs: Vec<f64> = (0..DIPOLE_FREQS.len()).map(|fi| run.rec.to_far_field(fi, 1.0, 2.0).unwrap().directivity_dbi()).collect();
    let secs = t.elapsed().as_secs_f64();
    let ok = (speed - 1.0).abs() < 0.01
        && refl <= -40.0
        && (cav / 16.77e9 - 1.0).abs() <= 0.02
        && (cav / cav_exact - 1.0).abs() <= 0.02
        && dirs.iter().all(|d| (d - 1.7609).abs() <= 0.1);
    let d = dirs.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>().join("/");
    check(
        ok,
        format!(
            "v/c {speed:.4}, CPML {refl:.1} dB, cavity {:.3} GHz (analytic {:.3}), dipole D {d} dBi; {secs:.0} s",
            cav / GHZ,
            cav_exact / GHZ
        ),
    )
}

/// Plain 11.6 mm patch on the reference substrate resonates within 5% of
/// the sizing-equation prediction. Resonance is the detected S11 band; the
/// input-resistance peak is printed alongside.
fn criterion_4() -> Verdict {
    let t = Instant::now();
    let cfg = RunConfig::default();
    let scene = AntennaScene { srr: SrrSlotSpec::none(), ..AntennaScene::default() };
    let predicted = resonant_frequency(scene.patch_length, scene.patch_width, scene.substrate_permittivity, scene.substrate_height)
        .map_err(|e| e.to_string())?;
    let map = voxelize(&scene, cfg.cell_size()).map_err(|e| e.to_string())?;
    let mut g = init_grid(&map, cfg.solver.padding_cells, &cfg.grid_options()).map_err(|e| e.to_string())?;
    let src = cfg.source();
    let out = run(&mut g, &src, &cfg.run_options(), &mut []).map_err(|e| e.to_string())?;
    let inc = calibration_record(&src, g.time_step, out.steps, 50.0);
    let s = reflection_spectrum(&out.record, &inc, &cfg.frequencies()).map_err(|e| e.to_string())?;
    let bands = find_bands(&s, cfg.spectrum.band_threshold_db);
    let z = s.input_impedance(50.0);
    let i = (0..z.len()).max_by(|&a, &b| z[a].re.total_cmp(&z[b].re)).unwrap();
    let nearest = bands.iter().min_by(|a, b| (a.resonant_frequency - predicted).abs().total_cmp(&(b.resonant_frequency - predicted).abs()));
    let Some(b) = nearest else {
        return Err(format!("no band below {} dB; max R_in at {:.3} GHz", cfg.spectrum.band_threshold_db, s.frequencies[i] / GHZ));
    };
    let rel = b.resonant_frequency / predicted - 1.0;
    check(
        rel.abs() <= 0.05 && out.converged,
        format!(
            "resonance {:.3} GHz ({:.2} dB) vs predicted {:.3} GHz: {:+.1}%; max R_in {:.0} ohm at {:.3} GHz; {} steps{}; {:.0} s",
            b.resonant_frequency / GHZ,
            b.s11_min_db,
            predicted / GHZ,
            100.0 * rel,
            z[i].re,
            s.frequencies[i] / GHZ,
            out.steps,
            if out.converged { "" } else { " (NOT converged)" },
            t.elapsed().as_secs_f64()
        ),
    )
}

fn shipped_run() -> &'static Result<(PipelineOutcome, f64), String> {
    static RUN: OnceLock<Result<(PipelineOutcome, f64), String>> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let t = Instant::now();
        let out = run_pipeline(&RunConfig::default(), dir.path()).map_err(|e| e.to_string())?;
        Ok((out, t.elapsed().as_secs_f64()))
    })
}

/// Reconfiguration behaviour of the shipped reference scene.
fn criterion_5() -> Verdict {
    let (out, secs) = shipped_run().as_ref().map_err(|e| e.clone())?;
    let get = |s: SwitchState| out.results.iter().find(|r| r.state == s).expect("both states run");
    let (off, on) = (get(SwitchState::Off), get(SwitchState::On));
    let fmt = |r: &patch_fdtd::pipeline::StateResult| {
        r.bands
            .iter()
            .zip(&r.band_gains)
            .map(|(b, g)| format!("{:.3} GHz/{:.1} dB/{} dBi", b.resonant_frequency / GHZ, b.s11_min_db, g.map(|g| format!("{g:.2}")).unwrap_or("-".into())))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let off_bands = off.bands.len() >= 2;
    // some band centre in one state has no counterpart within 200 MHz in the other
    let moved = |a: &patch_fdtd::pipeline::StateResult, b: &patch_fdtd::pipeline::StateResult| {
        a.bands.iter().any(|x| b.bands.iter().all(|y| (x.resonant_frequency - y.resonant_frequency).abs() > 200.0 * MHZ))
    };
    let differs = moved(on, off) || moved(off, on);
    // gain comparison at the band each state has nearest 5.9 GHz
    let shared = |r: &patch_fdtd::pipeline::StateResult| {
        r.band_near(5.9 * GHZ).filter(|(_, b)| (b.resonant_frequency / (5.9 * GHZ) - 1.0).abs() <= 0.1).and_then(|(i, _)| r.band_gains[i])
    };
    let gains = (shared(off), shared(on));
    let gain_ok = matches!(gains, (Some(a), Some(b)) if b > a);
    let stretch = {
        let near = |r: &patch_fdtd::pipeline::StateResult, f: f64| {
            r.band_near(f * GHZ).map(|(_, b)| (b.resonant_frequency / (f * GHZ) - 1.0).abs() <= 0.1).unwrap_or(false)
        };
        near(off, 5.9) && near(off, 8.1) && near(on, 5.0) && near(on, 5.9)
    };
    let conv = off.converged && on.converged;
    check(
        off_bands && differs && gain_ok && conv,
        format!(
            "OFF [{}]; ON [{}]; OFF>=2 bands {}; ON/OFF differ >200 MHz {}; gain ~5.9 GHz OFF {:?} ON {:?} -> ON higher {}; converged {}; stretch goal (10% of 5.9/8.1, 5.0/5.9 GHz) {}; {:.0} s",
            fmt(off),
            fmt(on),
            off_bands,
            differs,
            gains.0,
            gains.1,
            gain_ok,
            conv,
            if stretch { "met" } else { "not met" },
            secs
        ),
    )
}

fn small_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.solver.cell_size_mm = 0.4;
    c.solver.max_steps = 2500;
    c.solver.padding_cells = 16;
    c.feed.inner_radius_mm = 0.2;
    c.spectrum.step_mhz = 20.0;
    c.farfield.frequency_step_mhz = 500.0;
    c.farfield.angular_step_deg = 10.0;
    c
}

/// Byte-identical CSVs across two runs, and thread-count independence.
fn criterion_6() -> Verdict {
    let cfg = small_config();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ra = run_pipeline(&cfg, a.path()).map_err(|e| e.to_string())?;
    run_pipeline(&cfg, b.path()).map_err(|e| e.to_string())?;
    let mut csvs = 0;
    let mut identical = true;
    for f in ra.files.iter().filter(|f| f.extension().is_some_and(|e| e == "csv")) {
        let rel = f.strip_prefix(a.path()).unwrap();
        let x = std::fs::read(f).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(rel)).map_err(|e| e.to_string())?;
        identical &= x == y;
        csvs += 1;
    }
    let record = |threads: usize| {
        let scene = AntennaScene::default();
        let mut scene = scene;
        scene.feed.inner_radius = 0.2e-3;
        let map = voxelize(&scene, 0.4e-3).unwrap();
        let mut g = init_grid(&map, 16, &GridOptions::default()).unwrap();
        g.set_threads(Some(threads)).unwrap();
        run(&mut g, &SourceSpec::default(), &RunOptions { max_steps: 1500, ..Default::default() }, &mut []).unwrap().record
    };
    let (r1, r3) = (record(1), record(3));
    let num: f64 = r1.voltage.iter().zip(&r3.voltage).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = r1.voltage.iter().map(|x| x * x).sum();
    let rms = (num / den).sqrt();
    check(
        identical && csvs >= 7 && rms < 1e-12,
        format!("{csvs} CSV files byte-identical across runs: {identical}; 1 vs 3 threads port-voltage relative RMS {rms:.1e}"),
    )
}

/// Invariant suites: divergence, energy, DFT linearity, voxel symmetry,
/// pattern passivity.
fn criterion_7() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;

    let mut runner = TestRunner::new(Config { cases: 6, ..Config::default() });
    let modes = proptest::collection::vec((0usize..3, 1usize..5, 1usize..5, 1usize..5, proptest::prop_oneof![-1.0f64..-0.1, 0.1f64..1.0]), 1..4);
    let div = runner.run(&(modes, 1.0f64..6.0), |(m, eps)| {
        let r = divergence_ratio(&m, eps);
        proptest::prop_assert!(r <= 1e-5, "div H / |H| = {:e}", r);
        Ok(())
    });
    ok &= div.is_ok();
    notes.push(format!("divergence {}", if div.is_ok() { "ok" } else { "FAILED" }));

    let (grow, loss) = energy_drift(600);
    let energy = grow <= 1e-6 && loss <= 1e-4;
    ok &= energy;
    notes.push(format!("energy growth {grow:.1e} loss {loss:.1e}"));

    let mut runner = TestRunner::new(Config { cases: 32, ..Config::default() });
    let lin = runner.run(&(0.01f64..100.0, proptest::bool::ANY, 0usize..1000), |(a, neg, seed)| {
        let a = if neg { -a } else { a };
        let dt = 3.8e-13;
        let inc = calibration_record(&SourceSpec::default(), dt, 4000, 50.0);
        let mut tot = inc.clone();
        for (n, v) in tot.voltage.iter_mut().enumerate() {
            *v += 0.3 * ((n + seed) as f64 * 0.05).sin() * (-(n as f64) / 800.0).exp();
        }
        let freqs = frequency_axis(4e9, 10e9, 250e6);
        let scale = |r: &PortRecord| {
            let mut s = r.clone();
            s.voltage.iter_mut().for_each(|v| *v *= a);
            s.current.iter_mut().for_each(|v| *v *= a);
            s.source.iter_mut().for_each(|v| *v *= a);
            s
        };
        let base = reflection_spectrum(&tot, &inc, &freqs).unwrap();
        let scaled = reflection_spectrum(&scale(&tot), &scale(&inc), &freqs).unwrap();
        for (x, y) in base.gamma.iter().zip(&scaled.gamma) {
            proptest::prop_assert!((x - y).norm() <= 1e-12 * x.norm().max(1.0));
        }
        let s = dft(&tot.voltage, dt, &freqs);
        let s2 = dft(&scale(&tot).voltage, dt, &freqs);
        for (x, y) in s.iter().zip(&s2) {
            proptest::prop_assert!((y - a * x).norm() <= 1e-9 * (a * x).norm().max(1e-30));
        }
        Ok(())
    });
    ok &= lin.is_ok();
    notes.push(format!("DFT linearity {}", if lin.is_ok() { "ok" } else { "FAILED" }));

    let mut scene = AntennaScene::default();
    scene.feed.position = (mm_to_m(-3.0), mm_to_m(0.6));
    let a = voxelize(&scene, 0.2e-3).map_err(|e| e.to_string())?;
    let b = voxelize(&scene.mirrored_y(), 0.2e-3).map_err(|e| e.to_string())?;
    let ny = a.dims[1];
    let n = a.nodes();
    let mut sym = a.dims == b.dims && a.port.j == ny - b.port.j;
    for axis in patch_fdtd::geometry::Axis::ALL {
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    if a.edge_exists(axis, i, j, k) {
                        let jm = if axis == patch_fdtd::geometry::Axis::Y { ny - 1 - j } else { ny - j };
                        sym &= a.edge_class(axis, i, j, k) == b.edge_class(axis, i, jm, k);
                    }
                }
            }
        }
    }
    ok &= sym;
    notes.push(format!("voxel mirror symmetry {}", if sym { "ok" } else { "FAILED" }));

    // passivity: every pattern of the shipped run radiates no more than it accepts
    let run = run_dipole(1.0, 4, 6000);
    let mut worst: f64 = 0.0;
    for fi in 0..DIPOLE_FREQS.len() {
        let k = 2.0 * std::f64::consts::PI * DIPOLE_FREQS[fi] / patch_fdtd::constants::C0;
        let p = patch_fdtd::constants::ETA0 * k * k * (run.current[fi] * D).norm_sqr() / (12.0 * std::f64::consts::PI);
        worst = worst.max(run.rec.to_far_field(fi, p, 2.0).unwrap().efficiency());
    }
    let mut passive = worst <= 1.02;
    let mut detail = format!("dipole P_rad/P_in max {worst:.4}");
    if let Ok((out, _)) = shipped_run() {
        for r in &out.results {
            if let Some(p) = &r.pattern {
                passive &= p.efficiency() <= 1.02;
                detail += &format!(", {} {:.3} GHz efficiency {:.3}", r.state, p.frequency / GHZ, p.efficiency());
            }
        }
    }
    ok &= passive;
    notes.push(format!("passivity {detail}"));

    check(ok, notes.join("; "))
}

fn main() -> ExitCode {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(u32, &str, fn() -> Verdict); 7] = [
        (1, "design equations vs parameter table", criterion_1),
        (2, "VSWR/S11 consistency of published rows", criterion_2),
        (3, "solver physics oracles", criterion_3),
        (4, "plain patch resonance", criterion_4),
        (5, "switch reconfiguration of the reference scene", criterion_5),
        (6, "determinism", criterion_6),
        (7, "invariant suites", criterion_7),
    ];
    let mut failed = 0;
    let mut lines = Vec::new();
    for (n, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let line = match &verdict {
            Ok(d) => format!("criterion {n} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                format!("criterion {n} FAIL  {name}: {d}")
            }
        };
        println!("{line}");
        lines.push(line);
    }
    println!("\nacceptance summary");
    for l in &lines {
        println!("  {}", l.split(':').next().unwrap_or(l));
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
