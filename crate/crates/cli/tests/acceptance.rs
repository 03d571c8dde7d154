//! Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.
//!
//! Verdict lines are written to the process stdout handle directly so they show up in
//! `cargo test` output without `--nocapture`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use hardneg_core::dynamics::{
    step, step_margin, step_nca, vector_field, GridSpec, SimilarityUpdate, StepParams, VectorField,
};
use hardneg_core::eval::recall_at_k;
use hardneg_core::geometry::{normalize, TripletCoord};
use hardneg_core::loss::{coord_grad, loss_value, margin_violation, nca_weight};
use hardneg_core::mining::{mine, similarity_matrix};
use hardneg_core::trainer::{backward, batch_loss, forward, GradMode, ModelParams};
use hardneg_core::{BaseLoss, Batch, LossKind, LossSpec, MinedTriplet, MiningStrategy};

fn verdict(criterion: u32, ok: bool, detail: &str) {
    let line = format!(
        "{} criterion {criterion}: {detail}\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn coord(s_ap: f64, s_an: f64) -> TripletCoord {
    TripletCoord { s_ap, s_an }
}

// ---------------------------------------------------------------------------------------
// 1. Closed-form step equals the explicit three-vector step.

#[test]
fn criterion_1_closed_form_dynamics_match_vector_oracle() {
    let start = Instant::now();
    let mut rng = rng(1001);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let s_ap = uniform(&mut rng, -1.0, 1.0);
        let s_an = uniform(&mut rng, -1.0, 1.0);
        let gamma = uniform(&mut rng, -1.0, 1.0);
        let beta = uniform(&mut rng, 0.0, 0.5);
        let c = coord(s_ap, s_an);

        // NCA: choose the learning rate that yields this β.
        let lr = beta / nca_weight(c);
        let u = step_nca(c, &StepParams::new(lr, LossSpec::nca()).with_gamma(gamma));
        let o = nca_step_oracle(s_ap, s_an, gamma, lr * nca_weight(c));
        worst = worst.max(max_field_diff(&u, &o));

        // Margin: β = 2·lr; a margin of 4.5 keeps the hinge active everywhere.
        let params = StepParams::new(beta / 2.0, LossSpec::margin(4.5)).with_gamma(gamma);
        let u = step_margin(c, &params);
        let o = margin_step_oracle(s_ap, s_an, gamma, 2.0 * params.learning_rate);
        worst = worst.max(max_field_diff(&u, &o));
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-9 && elapsed < Duration::from_secs(10);
    verdict(1, ok, &format!("10000 samples x 2 losses, max abs diff {worst:.2e} (tol 1e-9), {elapsed:.2?} (limit 10 s)"));
    assert!(worst <= 1e-9, "max diff {worst}");
    assert!(elapsed < Duration::from_secs(10));
}

fn max_field_diff(u: &SimilarityUpdate, o: &OracleStep) -> f64 {
    [
        u.s_ap_new - o.s_ap_new,
        u.s_an_new - o.s_an_new,
        u.norm_a - o.norm_a,
        u.norm_p - o.norm_p,
        u.norm_n - o.norm_n,
        u.d_sap - o.d_sap,
        u.d_san - o.d_san,
    ]
    .iter()
    .fold(0.0, |m, d| m.max(d.abs()))
}

// ---------------------------------------------------------------------------------------
// 2. Analytic gradients against central differences.

const FD_STEP: f64 = 1e-5;

fn gradient_losses() -> [LossSpec; 4] {
    [
        LossSpec::nca(),
        LossSpec::margin(0.2),
        LossSpec::sct(1.0),
        LossSpec::sct(0.5)
            .with_base(BaseLoss::Margin)
            .with_margin(0.3),
    ]
}

fn away_from_branches(c: TripletCoord, loss: &LossSpec) -> bool {
    let hinge = margin_violation(c, loss.margin).abs() > 1e-3;
    let diag = (c.s_an - c.s_ap).abs() > 1e-3;
    match loss.kind {
        LossKind::Nca => true,
        LossKind::Margin => hinge,
        LossKind::Sct => diag && (loss.base == BaseLoss::Nca || hinge),
    }
}

#[test]
fn criterion_2_gradients_match_finite_differences() {
    let start = Instant::now();
    let mut rng = rng(1002);
    let mut worst_coord: f64 = 0.0;
    let mut worst_model: f64 = 0.0;
    for loss in &gradient_losses() {
        let mut n = 0;
        while n < 1000 {
            let c = coord(
                uniform(&mut rng, -0.999, 0.999),
                uniform(&mut rng, -0.999, 0.999),
            );
            if !away_from_branches(c, loss) {
                continue;
            }
            let g = coord_grad(c, loss);
            let f = |a: f64, b: f64| loss_value(coord(a, b), loss);
            let fd = [
                (f(c.s_ap + FD_STEP, c.s_an) - f(c.s_ap - FD_STEP, c.s_an)) / (2.0 * FD_STEP),
                (f(c.s_ap, c.s_an + FD_STEP) - f(c.s_ap, c.s_an - FD_STEP)) / (2.0 * FD_STEP),
            ];
            worst_coord = worst_coord.max(rel_err(&[g.d_sap, g.d_san], &fd));
            n += 1;
        }

        let mut n = 0;
        while n < 1000 {
            let (params, inputs, triplets) = random_model_problem(&mut rng);
            let clean = triplets.iter().all(|t| {
                let f = |i: usize| forward(&params, &inputs[i]).unwrap().into_inner();
                let c = coord(
                    dot(&f(t.anchor), &f(t.positive)),
                    dot(&f(t.anchor), &f(t.negative)),
                );
                away_from_branches(c, loss)
            });
            if !clean {
                continue;
            }
            let g = backward(
                &params,
                &inputs,
                &triplets,
                loss,
                GradMode::ThroughNormalization,
            )
            .unwrap();
            let mut analytic = g.weights.clone();
            analytic.extend(&g.bias);
            let mut numeric = Vec::with_capacity(analytic.len());
            let total = params.weights.len() + params.bias.len();
            for k in 0..total {
                let shifted = |h: f64| {
                    let mut p = params.clone();
                    if k < p.weights.len() {
                        p.weights[k] += h;
                    } else {
                        let j = k - p.weights.len();
                        p.bias[j] += h;
                    }
                    batch_loss(&p, &inputs, &triplets, loss).unwrap()
                };
                numeric.push((shifted(FD_STEP) - shifted(-FD_STEP)) / (2.0 * FD_STEP));
            }
            worst_model = worst_model.max(rel_err(&analytic, &numeric));
            n += 1;
        }
    }
    let elapsed = start.elapsed();
    let worst = worst_coord.max(worst_model);
    let ok = worst <= 1e-4 && elapsed < Duration::from_secs(30);
    verdict(2, ok, &format!(
        "4 losses x 1000 points, max rel err coord {worst_coord:.2e}, through-normalization {worst_model:.2e} (tol 1e-4), {elapsed:.2?} (limit 30 s)"
    ));
    assert!(worst <= 1e-4);
    assert!(elapsed < Duration::from_secs(30));
}

/// A 4 -> 3 affine model, six inputs and two triplets over them.
fn random_model_problem(
    rng: &mut rand_chacha::ChaCha8Rng,
) -> (ModelParams, Vec<Vec<f64>>, Vec<MinedTriplet>) {
    let bias = gaussian(rng, 3).iter().map(|b| 0.3 * b).collect();
    let params = ModelParams::new(4, 3, gaussian(rng, 12), bias).unwrap();
    let inputs = (0..6).map(|_| gaussian(rng, 4)).collect();
    let t = |anchor, positive, negative| MinedTriplet {
        anchor,
        positive,
        negative,
        coord: coord(0.0, 0.0),
    };
    (params, inputs, vec![t(0, 1, 2), t(3, 4, 5)])
}

// ---------------------------------------------------------------------------------------
// 3. Fixed point and zero step.

#[test]
fn criterion_3_fixed_point_and_zero_step() {
    let mut worst: f64 = 0.0;
    let gammas = [-1.0, -0.5, 0.0, 0.25, 0.5, 0.75, 1.0];
    let ps = [0.0, 0.25, 0.5, 1.0, 2.0];
    let losses = [
        LossSpec::nca(),
        LossSpec::margin(0.0),
        LossSpec::margin(0.2),
        LossSpec::margin(1.0),
    ];
    for &gamma in &gammas {
        for &p in &ps {
            for loss in losses {
                for lr in [0.01, 0.1, 0.4] {
                    let params = StepParams::new(lr, loss)
                        .with_gamma(gamma)
                        .with_entanglement(p);
                    let u = step(coord(1.0, 1.0), &params).unwrap();
                    for d in [u.d_sap, u.d_san, u.d_sap_total, u.d_san_total] {
                        worst = worst.max(d.abs());
                    }
                }
            }
        }
    }
    let mut rng = rng(1003);
    let mut worst_identity: f64 = 0.0;
    for _ in 0..2000 {
        let c = coord(uniform(&mut rng, -1.0, 1.0), uniform(&mut rng, -1.0, 1.0));
        let gamma = uniform(&mut rng, -1.0, 1.0);
        let p = uniform(&mut rng, 0.0, 1.0);
        for loss in losses {
            let u = step(
                c,
                &StepParams::new(0.0, loss)
                    .with_gamma(gamma)
                    .with_entanglement(p),
            )
            .unwrap();
            let id = SimilarityUpdate::identity(c);
            for d in [
                u.s_ap_new - id.s_ap_new,
                u.s_an_new - id.s_an_new,
                u.norm_a - 1.0,
                u.norm_p - 1.0,
                u.norm_n - 1.0,
                u.d_sap,
                u.d_san,
                u.d_sap_total,
                u.d_san_total,
            ] {
                worst_identity = worst_identity.max(d.abs());
            }
        }
    }
    let ok = worst <= 1e-12 && worst_identity <= 1e-12;
    verdict(3, ok, &format!(
        "(1,1) max |delta| {worst:.2e} over gamma x p x loss x lr; zero-step max deviation {worst_identity:.2e} (tol 1e-12)"
    ));
    assert!(worst <= 1e-12);
    assert!(worst_identity <= 1e-12);
}

// ---------------------------------------------------------------------------------------
// 4. Vector-field structure.

struct FieldScan {
    /// max |ΔS_ap| over cells with S_ap > 0.99, divided by max |ΔS_ap| over the field.
    edge_ratio: f64,
    /// Cells with S_an > S_ap and ΔS_an_total > 0.
    rising_hard_cells: usize,
}

fn scan(field: &VectorField) -> FieldScan {
    let edge = field
        .arrows
        .iter()
        .filter(|a| a.s_ap > 0.99)
        .map(|a| a.d_sap.abs())
        .fold(0.0, f64::max);
    FieldScan {
        edge_ratio: edge / field.max_abs_d_sap(),
        rising_hard_cells: field
            .arrows
            .iter()
            .filter(|a| a.s_an > a.s_ap && a.d_san_total > 0.0)
            .count(),
    }
}

#[test]
fn criterion_4_field_structure() {
    let mut parts = Vec::new();
    let mut edge_ok = true;
    let mut entangled_ok = true;
    let mut unentangled_empty = true;
    for (name, loss) in [("nca", LossSpec::nca()), ("margin", LossSpec::margin(0.2))] {
        let mut cells = BTreeMap::new();
        for p in [0.0, 0.5, 1.0] {
            let params = StepParams::new(0.1, loss).with_entanglement(p);
            let s = scan(&vector_field(GridSpec::full(41), params).unwrap());
            edge_ok &= s.edge_ratio < 0.01;
            parts.push(format!("{name} p={p} edge ratio {:.4}", s.edge_ratio));
            cells.insert(format!("{p}"), s.rising_hard_cells);
        }
        entangled_ok &= cells["1"] > 0;
        unentangled_empty &= cells["0"] == 0;
        parts.push(format!(
            "{name} rising hard cells p=0:{} p=0.5:{} p=1:{}",
            cells["0"], cells["0.5"], cells["1"]
        ));
    }
    let ok = edge_ok && entangled_ok && unentangled_empty;
    verdict(
        4,
        ok,
        &format!(
            "(a) edge ratio < 0.01: {}; (b) p=1 set nonempty: {}; (b) p=0 set empty: {} [{}]",
            edge_ok,
            entangled_ok,
            unentangled_empty,
            parts.join(", ")
        ),
    );
    assert!(
        edge_ok,
        "re-projection does not suppress ΔS_ap at S_ap > 0.99"
    );
    assert!(entangled_ok, "no hard cell with ΔS_an_total > 0 at p = 1");
    assert!(
        unentangled_empty,
        "hard cells with ΔS_an_total > 0 already exist at p = 0"
    );
}

// ---------------------------------------------------------------------------------------
// 5. Collapse and convergence, run through the command-line tool.

fn hardneg(args: &[&str], dir: &Path) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_hardneg"))
        .args(args)
        .current_dir(dir)
        .env_remove("HARDNEG_OUT_DIR")
        .output()
        .expect("spawn hardneg");
    assert!(
        out.status.success(),
        "hardneg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[derive(serde::Deserialize)]
struct Record {
    recall_at_1: f64,
    collapse: f64,
}

fn final_record(path: &Path) -> Record {
    let records: Vec<Record> = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    records.into_iter().last().unwrap()
}

#[test]
fn criterion_5_collapse_versus_convergence() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut ok = true;
    let mut rows = Vec::new();
    for seed in 0..5 {
        let s = seed.to_string();
        let data = format!("data_{seed}.csv");
        hardneg(
            &[
                "gen-data",
                "--classes",
                "8",
                "--per-class",
                "32",
                "--dim",
                "16",
                "--spread",
                "2.0",
                "--seed",
                &s,
                "--out",
                &data,
            ],
            d,
        );
        let run = |loss: &str, miner: &str| {
            let prefix = format!("{loss}_{miner}_{seed}");
            hardneg(
                &[
                    "train",
                    "--data",
                    &data,
                    "--loss",
                    loss,
                    "--miner",
                    miner,
                    "--embed-dim",
                    "8",
                    "--seed",
                    &s,
                    "--out-prefix",
                    &prefix,
                ],
                d,
            );
            final_record(&d.join(format!("{prefix}_log.json")))
        };
        let hn = run("nca", "hn");
        let sct = run("sct", "hn");
        let shn = run("nca", "shn");
        let seed_ok =
            hn.collapse > sct.collapse && sct.recall_at_1 > hn.recall_at_1 && shn.collapse < 0.9;
        ok &= seed_ok;
        rows.push(format!(
            "seed {seed}: collapse hn {:.3} / sct {:.3} / shn {:.3}, R@1 hn {:.3} / sct {:.3}",
            hn.collapse, sct.collapse, shn.collapse, hn.recall_at_1, sct.recall_at_1
        ));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(300);
    verdict(
        5,
        ok,
        &format!("{}; {elapsed:.2?} (limit 5 min)", rows.join("; ")),
    );
    assert!(ok, "{rows:#?}");
}

// ---------------------------------------------------------------------------------------
// 6. Mining and retrieval against exhaustive oracles.

#[test]
fn criterion_6_mining_and_recall_match_brute_force() {
    let mut rng = rng(1006);
    let mut mining_checks = 0;
    let mut recall_checks = 0;
    let mut mismatches = 0;
    for round in 0..200u64 {
        let (vectors, labels) = random_batch(&mut rng);
        let units = vectors.iter().map(|v| normalize(v).unwrap()).collect();
        let batch = Batch::new(units, labels.clone()).unwrap();
        let sim = similarity_matrix(&batch);
        let table: Vec<Vec<f64>> = (0..batch.len()).map(|i| sim.row(i).to_vec()).collect();
        for strategy in MiningStrategy::ALL {
            let got: Vec<_> = mine(&batch, strategy, round)
                .unwrap()
                .iter()
                .map(|t| (t.anchor, t.positive, t.negative))
                .collect();
            mismatches += usize::from(got != mine_oracle(&table, &labels, strategy, round));
            mining_checks += 1;
        }
        let rows: Vec<Vec<f64>> = batch
            .embeddings()
            .iter()
            .map(|e| e.as_slice().to_vec())
            .collect();
        for k in 1..batch.len().min(9) {
            let got = recall_at_k(&batch, &batch, k, true).unwrap().recall;
            mismatches +=
                usize::from(got != recall_oracle(&rows, &labels, &rows, &labels, k, true));
            let got = recall_at_k(&batch, &batch, k, false).unwrap().recall;
            mismatches +=
                usize::from(got != recall_oracle(&rows, &labels, &rows, &labels, k, false));
            recall_checks += 2;
        }
    }
    let ok = mismatches == 0;
    verdict(6, ok, &format!(
        "200 batches: {mining_checks} mining and {recall_checks} recall comparisons, {mismatches} mismatches"
    ));
    assert_eq!(mismatches, 0);
}

// ---------------------------------------------------------------------------------------
// 7. Every command is byte-for-byte deterministic.

fn data_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.ends_with(".csv") || name.ends_with(".json") {
            out.insert(name, std::fs::read(&path).unwrap());
        }
    }
    out
}

#[test]
fn criterion_7_commands_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let commands: Vec<Vec<&str>> = vec![
        vec![
            "gen-data",
            "--classes",
            "6",
            "--per-class",
            "10",
            "--dim",
            "8",
            "--spread",
            "1.5",
            "--seed",
            "3",
            "--out",
            "data.csv",
        ],
        vec![
            "simulate",
            "--loss",
            "nca",
            "--p",
            "1",
            "--resolution",
            "21",
            "--out-prefix",
            "field_nca",
        ],
        vec![
            "simulate",
            "--loss",
            "margin",
            "--p",
            "0.5",
            "--gamma",
            "0.5",
            "--out-prefix",
            "field_margin",
        ],
        vec![
            "trajectory",
            "--p",
            "1",
            "--steps",
            "25",
            "--out-prefix",
            "traj",
        ],
        vec![
            "train",
            "--data",
            "data.csv",
            "--epochs",
            "6",
            "--classes-per-batch",
            "4",
            "--snapshot-every",
            "3",
            "--out-prefix",
            "run",
        ],
        vec![
            "diagram",
            "--data",
            "data.csv",
            "--weights",
            "run_model.json",
            "--out-prefix",
            "diag",
        ],
        vec!["diagram", "--data", "data.csv", "--out-prefix", "diag_raw"],
        vec![
            "eval",
            "--data",
            "data.csv",
            "--weights",
            "run_model.json",
            "--out-prefix",
            "ev",
        ],
        vec!["replay", "run.manifest.json"],
    ];
    let mut differing = Vec::new();
    let mut compared = 0;
    for args in &commands {
        hardneg(args, d);
        let first = data_files(d);
        hardneg(args, d);
        let second = data_files(d);
        for (name, bytes) in &first {
            compared += 1;
            if second.get(name) != Some(bytes) {
                differing.push(format!("{} -> {name}", args[0]));
            }
        }
    }
    let ok = differing.is_empty();
    verdict(
        7,
        ok,
        &format!(
            "{} commands run twice, {compared} CSV/JSON comparisons, differing: {differing:?}",
            commands.len()
        ),
    );
    assert!(ok);
}
