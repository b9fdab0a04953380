//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Runtime budgets count as part of each criterion.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use common::*;
use gnnstrat_core::experiment::{run_experiment, ExperimentConfig, VariantSummary};
use gnnstrat_core::kernels;
use gnnstrat_core::models::{forward_on_tape, model_forward, Arch, GraphContext, ModelSpec, ModelWeights, Variant};
use gnnstrat_core::spectral::{
    jacobi_eigenvalues, partition_spectrum, symmetric_eigenvalues, Group, Normalization, DEFAULT_DENSE_LIMIT,
};
use gnnstrat_core::train::TrainConfig;
use gnnstrat_core::{
    load_dataset, otsu_threshold, partition_by_degree, CsrMatrix, Dataset, DegreeHistogram, OtsuScale, ThetaMode,
};
use rand::Rng;

const CORA_THETA: usize = 2;
const SEEDS: usize = 10;

fn cora_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/assets/cora")
}

struct Report {
    failures: usize,
}

impl Report {
    /// Runs `f`, which returns (passed, detail), and prints its line.
    fn check(&mut self, name: &str, budget_s: f64, f: impl FnOnce() -> (bool, String)) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f));
        self.record(name, budget_s, start.elapsed().as_secs_f64(), outcome);
    }

    fn record(&mut self, name: &str, budget_s: f64, secs: f64, outcome: std::thread::Result<(bool, String)>) {
        let (ok, detail) = match outcome {
            Ok((ok, detail)) => (ok, detail),
            Err(p) => {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let in_time = secs <= budget_s;
        let pass = ok && in_time;
        if !pass {
            self.failures += 1;
        }
        let late = if in_time { "" } else { ", over budget" };
        println!(
            "{} {name}: {detail} [{secs:.1} s of {budget_s:.0} s{late}]",
            if pass { "PASS" } else { "FAIL" }
        );
    }
}

fn gradient_integrity() -> (bool, String) {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for arch in Arch::ALL {
        for variant in [Variant::Baseline, Variant::Stratified] {
            for n in 8..=12 {
                let mut r = rng(1000 + n as u64);
                let g = random_graph(n, 0.3, &mut r);
                let x = random_tensor(n, 5, &mut r);
                let mut spec = ModelSpec::new(arch, variant, 5, 3);
                spec.hidden_dim = 6;
                let w = ModelWeights::init(&spec, n as u64).unwrap();
                let ctx = GraphContext::new(&g, &x).unwrap();
                let part = random_mask_partition(n, &mut r);
                let labels: Arc<[usize]> = (0..n).map(|_| r.gen_range(0..3)).collect();
                let mask: Arc<[usize]> = (0..n).collect();
                let err = fd_max_rel_err(w.params(), 1e-5, |t, v| {
                    let logits = forward_on_tape(t, &spec, v, &ctx, Some(&part))?;
                    t.cross_entropy(logits, &labels, &mask)
                });
                worst = worst.max(err);
                cases += 1;
            }
        }
    }
    (worst <= 1e-4, format!("max relative error {worst:.2e} over {cases} models (limit 1e-4)"))
}

fn tied_weights() -> (bool, String) {
    let mut mismatches = 0;
    for i in 0..50u64 {
        let arch = Arch::ALL[i as usize % 3];
        let mut r = rng(2000 + i);
        let n = r.gen_range(5..40);
        let g = random_graph(n, 0.15, &mut r);
        let x = random_sparse_tensor(n, 8, 0.4, &mut r);
        let ctx = GraphContext::new(&g, &x).unwrap();
        let part = random_mask_partition(n, &mut r);
        let mut spec = ModelSpec::new(arch, Variant::Stratified, 8, 4);
        spec.hidden_dim = 6;
        let mut w = ModelWeights::init(&spec, i).unwrap();
        w.tie_groups();
        let strat = model_forward(&w, &ctx, Some(&part)).unwrap();
        let base = model_forward(&w.low_group_as_baseline(), &ctx, None).unwrap();
        if strat != base {
            mismatches += 1;
        }
    }
    (mismatches == 0, format!("{mismatches} of 50 instances differ from the baseline"))
}

fn kernel_oracles() -> (bool, String) {
    let mut r = rng(3000);
    let mut spmm_err = 0.0f64;
    for n in [1, 10, 50, 100, 200] {
        let a = random_sparse_tensor(n, n, 0.05, &mut r);
        let x = random_tensor(n, 8, &mut r);
        let got = kernels::spmm(&CsrMatrix::from_dense(&a), &x).unwrap();
        spmm_err = spmm_err.max(got.max_abs_diff(&naive_matmul(&a, &x)));
    }

    let mut otsu_bad = 0;
    for _ in 0..1000 {
        let counts: Vec<usize> = (0..r.gen_range(2..40))
            .map(|_| if r.gen_bool(0.6) { r.gen_range(1..60) } else { 0 })
            .collect();
        let hist = DegreeHistogram::from_counts(counts.clone());
        let Ok(got) = otsu_threshold(&hist, OtsuScale::Linear) else {
            otsu_bad += usize::from(hist.nonempty_bins() >= 2);
            continue;
        };
        let degrees: Vec<usize> = counts.iter().enumerate().flat_map(|(d, &c)| std::iter::repeat_n(d, c)).collect();
        let best = (0..*degrees.iter().max().unwrap())
            .filter(|&t| degrees.iter().any(|&d| d <= t) && degrees.iter().any(|&d| d > t))
            .map(|t| between_class_variance(&degrees, t))
            .fold(f64::NEG_INFINITY, f64::max);
        if between_class_variance(&degrees, got) < best * (1.0 - 1e-12) {
            otsu_bad += 1;
        }
    }

    let mut root_err = 0.0f64;
    for _ in 0..10 {
        let m = random_symmetric(4, &mut r);
        let got = symmetric_eigenvalues(&m).unwrap();
        let want = charpoly_roots(&m);
        if want.len() != 4 {
            root_err = f64::INFINITY;
            continue;
        }
        for (g, w) in got.iter().zip(&want) {
            root_err = root_err.max((g - w).abs());
        }
    }

    let mut inv_err = 0.0f64;
    for n in [2, 10, 50, 100, 200] {
        let m = random_symmetric(n, &mut r);
        let eig = jacobi_eigenvalues(&m, 1e-10, 100).unwrap();
        let trace: f64 = (0..n).map(|i| m.get(i, i)).sum();
        let fro: f64 = m.data().iter().map(|v| v * v).sum();
        inv_err = inv_err
            .max((eig.iter().sum::<f64>() - trace).abs() / trace.abs().max(1.0))
            .max((eig.iter().map(|v| v * v).sum::<f64>() - fro).abs() / fro.max(1.0));
    }

    let pass = spmm_err <= 1e-12 && otsu_bad == 0 && root_err <= 1e-8 && inv_err <= 1e-9;
    (
        pass,
        format!(
            "spmm {spmm_err:.1e}, otsu mismatches {otsu_bad}/1000, 4x4 roots {root_err:.1e}, trace/Frobenius {inv_err:.1e}"
        ),
    )
}

fn spectral_range(cora: &Dataset) -> (bool, String) {
    let in_range = |l: f64| (-1.0..=1.0 + 1e-9).contains(&l);
    let mut r = rng(4000);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ok = true;
    for i in 0..20 {
        let n = r.gen_range(2..120);
        let g = random_graph(n, r.gen_range(0.01..0.3), &mut r);
        let part = random_mask_partition(n, &mut r);
        let norm = if i % 2 == 0 { Normalization::Subgraph } else { Normalization::Full };
        for group in [Group::Full, Group::Low, Group::High] {
            let s = partition_spectrum(&g, Some(&part), group, norm, DEFAULT_DENSE_LIMIT).unwrap();
            ok &= s.eigenvalues.iter().all(|&l| in_range(l));
        }
    }
    let part = partition_by_degree(&cora.graph.degrees(), CORA_THETA).unwrap();
    let mut sizes = Vec::new();
    for group in [Group::Low, Group::High] {
        let s = partition_spectrum(&cora.graph, Some(&part), group, Normalization::Subgraph, DEFAULT_DENSE_LIMIT).unwrap();
        ok &= s.eigenvalues.iter().all(|&l| in_range(l));
        lo = lo.min(s.summary().min);
        hi = hi.max(s.summary().max);
        sizes.push(s.len());
    }
    (
        ok,
        format!(
            "20 random graphs and Cora groups at theta {CORA_THETA} (low {}, high {} nodes): Cora range [{lo:.6}, {hi:.12}]",
            sizes[0], sizes[1]
        ),
    )
}

fn cora_experiment(cora: &Dataset, arch: Arch, variants: &[Variant]) -> Vec<VariantSummary> {
    let base = TrainConfig {
        theta: ThetaMode::Fixed(CORA_THETA),
        ..TrainConfig::new(arch, Variant::Baseline)
    };
    let cfg = ExperimentConfig {
        variants: variants.to_vec(),
        runs: SEEDS,
        workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        ..ExperimentConfig::new(base)
    };
    run_experiment(&cfg, cora).unwrap().variants
}

fn cli(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_gnnstrat")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn determinism() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let data = cora_dir();
    let run = |name: &str| {
        let path = dir.path().join(name);
        cli(&[
            "train", "--data", data.to_str().unwrap(), "--model", "gcn", "--variant", "stratified", "--theta", "auto",
            "--seed", "0", "--out", path.to_str().unwrap(),
        ]);
        std::fs::read(path).unwrap()
    };
    let (a, b) = (run("a.json"), run("b.json"));
    (a == b && !a.is_empty(), format!("two train invocations wrote {} and {} bytes, identical: {}", a.len(), b.len(), a == b))
}

fn sweep_harness() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("synthetic");
    let csv = dir.path().join("sweep.csv");
    cli(&["synth", "--out", data.to_str().unwrap(), "--nodes", "500"]);
    cli(&[
        "sweep-theta", "--data", data.to_str().unwrap(), "--model", "gcn", "--thetas", "1-10", "--out",
        csv.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let mut ok = lines.first() == Some(&"theta,mean,std,status") && lines.len() == 12;
    ok &= lines.get(1).is_some_and(|l| l.starts_with("baseline,") && l.ends_with(",baseline"));
    let (mut done, mut skipped) = (0, 0);
    for (line, t) in lines.iter().skip(2).zip(1..=10) {
        let f: Vec<&str> = line.split(',').collect();
        ok &= f.len() == 4 && f[0] == t.to_string();
        match f.get(3) {
            Some(&"ok") => {
                ok &= f[1].parse::<f64>().is_ok() && f[2].parse::<f64>().is_ok();
                done += 1;
            }
            Some(&"skipped") => {
                ok &= f[1].is_empty() && f[2].is_empty();
                skipped += 1;
            }
            _ => ok = false,
        }
    }
    (ok, format!("{} rows after the header: baseline, {done} ok, {skipped} skipped", lines.len().saturating_sub(1)))
}

fn mean_of(s: &[VariantSummary], v: Variant) -> &VariantSummary {
    s.iter().find(|x| x.variant == v).unwrap()
}

fn main() {
    let mut report = Report { failures: 0 };
    report.check("gradient integrity", 30.0, gradient_integrity);
    report.check("tied-weights equivalence", 10.0, tied_weights);
    report.check("kernel oracles", 60.0, kernel_oracles);

    let cora = load_dataset(cora_dir()).expect("Cora fixture");
    report.check("spectral range", 180.0, || spectral_range(&cora));

    let start = Instant::now();
    let gcn_base = catch_unwind(AssertUnwindSafe(|| cora_experiment(&cora, Arch::Gcn, &[Variant::Baseline])));
    let base_secs = start.elapsed().as_secs_f64();
    let gcn_base = gcn_base.map(|mut v| v.remove(0));
    report.record(
        "Cora baseline band",
        120.0,
        base_secs,
        gcn_base.as_ref().map(|b| {
            (
                (0.76..=0.82).contains(&b.mean),
                format!("GCN baseline mean {:.4} ± {:.4} over {SEEDS} seeds (band [0.76, 0.82])", b.mean, b.std),
            )
        }).map_err(|_| Box::new("baseline runs failed") as Box<dyn std::any::Any + Send>),
    );

    let rest = catch_unwind(AssertUnwindSafe(|| {
        (
            cora_experiment(&cora, Arch::Gcn, &[Variant::Stratified, Variant::Random]),
            cora_experiment(&cora, Arch::Gat, &[Variant::Baseline, Variant::Stratified]),
            cora_experiment(&cora, Arch::Sage, &[Variant::Baseline, Variant::Stratified]),
        )
    }));
    let total_secs = start.elapsed().as_secs_f64();
    let runs = match (gcn_base, rest) {
        (Ok(b), Ok(r)) => Some((b, r)),
        _ => None,
    };
    let Some((gcn_base, (gcn_rest, gat, sage))) = runs else {
        for name in ["stratification benefit", "ablation direction", "group-accuracy ordering"] {
            report.record(name, 600.0, total_secs, Err(Box::new("Cora runs failed")));
        }
        finish(report);
        return;
    };
    let gcn_strat = mean_of(&gcn_rest, Variant::Stratified);
    let gcn_rand = mean_of(&gcn_rest, Variant::Random);

    let deltas = [
        ("GCN", gcn_strat.mean - gcn_base.mean),
        ("GAT", mean_of(&gat, Variant::Stratified).mean - mean_of(&gat, Variant::Baseline).mean),
        ("SAGE", mean_of(&sage, Variant::Stratified).mean - mean_of(&sage, Variant::Baseline).mean),
    ];
    let detail = deltas.iter().map(|(a, d)| format!("{a} {d:+.4}")).collect::<Vec<_>>().join(", ");
    report.record(
        "stratification benefit",
        600.0,
        total_secs,
        Ok((deltas.iter().all(|(_, d)| *d >= 0.003), format!("stratified minus baseline at theta {CORA_THETA}: {detail} (need >= +0.003 each)"))),
    );
    report.record(
        "ablation direction",
        600.0,
        total_secs,
        Ok((
            gcn_rand.mean <= gcn_base.mean + 0.005,
            format!("GCN random division {:.4} vs baseline {:.4} (need <= baseline + 0.005)", gcn_rand.mean, gcn_base.mean),
        )),
    );
    let group = |s: &VariantSummary| (s.low_mean.unwrap_or(f64::NAN), s.high_mean.unwrap_or(f64::NAN));
    let (bl, bh) = group(&gcn_base);
    let (sl, sh) = group(gcn_strat);
    report.record(
        "group-accuracy ordering",
        600.0,
        total_secs,
        Ok((
            bl < bh && sl > bl && sh > bh,
            format!("GCN baseline low {bl:.4} / high {bh:.4}; stratified low {sl:.4} / high {sh:.4}"),
        )),
    );

    report.check("determinism", 120.0, determinism);
    report.check("theta-sweep harness", 120.0, sweep_harness);
    finish(report);
}

fn finish(report: Report) {
    if report.failures > 0 {
        println!("{} acceptance criteria failed", report.failures);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
