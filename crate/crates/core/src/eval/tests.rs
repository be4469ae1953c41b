use std::path::Path;

use super::*;
use crate::agent::ModelDims;
use crate::belief::mask_observation;
use crate::envs::make_task;
use crate::variant::Variant;

fn small_agent(variant: Variant, obs: usize) -> Agent {
    let dims = ModelDims {
        width: 8,
        head_hidden: 8,
        n_critics: 2,
    };
    Agent::new(variant, obs, 2, dims, 4).unwrap()
}

#[test]
fn degradation_examples() {
    assert_eq!(relative_degradation(0.7, 0.7).unwrap(), 0.0);
    let d = relative_degradation(84.0, 95.0).unwrap();
    assert!((d + 0.1158).abs() < 5e-5);
    assert_eq!(format!("{:.1}", 100.0 * d), "-11.6");
    let d = relative_degradation(62.0, 54.0).unwrap();
    assert!((d - 0.148).abs() < 5e-4);
    assert_eq!(format!("{:.1}", 100.0 * d), "14.8");
    let d = relative_degradation(7.0, 82.0).unwrap();
    assert_eq!(format!("{:.1}", 100.0 * d), "-91.5");
    assert!(matches!(
        relative_degradation(1.0, 0.0),
        Err(Error::UndefinedDegradation)
    ));
}

#[test]
fn degradation_sign_follows_direction() {
    assert!(relative_degradation(1.2, 1.0).unwrap() > 0.0);
    assert!(relative_degradation(0.8, 1.0).unwrap() < 0.0);
}

#[test]
fn reference_table_arithmetic() {
    let (worst, n) = reference_arithmetic_check().unwrap();
    assert_eq!(n, 360);
    assert!(worst <= 0.1, "{worst}");
    let dc = REFERENCE_ROWS
        .iter()
        .find(|r| {
            r.task == "Drawer-Close" && r.method == "membot-ssm" && r.metric == Metric::Success
        })
        .unwrap();
    assert_eq!(
        (dc.values[0], dc.values[10], dc.degradation[0]),
        (62.0, 54.0, 14.8)
    );
    let hp = REFERENCE_ROWS
        .iter()
        .find(|r| {
            r.task == "Handle-Press" && r.method == "membot-ssm" && r.metric == Metric::Success
        })
        .unwrap();
    assert_eq!(
        (hp.values[0], hp.values[10], hp.degradation[0]),
        (7.0, 82.0, -91.5)
    );
}

#[test]
fn reference_rows_cover_every_method_tag() {
    for v in Variant::ALL {
        assert_eq!(
            REFERENCE_ROWS
                .iter()
                .filter(|r| r.method == v.tag())
                .count(),
            6
        );
    }
}

#[test]
fn expert_reach_success() {
    let task = make_task("reach", 3).unwrap();
    let r = evaluate_expert(&task, 1.0, 100, &[0]).unwrap();
    assert!(r.success_rate >= 0.95);
    assert_eq!(r.success_rate, r.successes as f64 / r.n_episodes as f64);
    assert_eq!(r.n_episodes, 100);
}

#[test]
fn counts_pool_over_seeds() {
    let task = make_task("reach", 3).unwrap();
    let agent = small_agent(Variant::Lstm, 4);
    let r = evaluate(&agent, &task, 0.8, 7, &[1, 2, 3]).unwrap();
    assert_eq!(r.n_episodes, 21);
    assert_eq!(r.per_seed.len(), 3);
    assert_eq!(
        r.successes,
        r.per_seed.iter().map(|s| s.successes).sum::<usize>()
    );
    assert!((0.0..=1.0).contains(&r.success_rate));
    assert!(r.success_std >= 0.0);
}

#[test]
fn full_observability_matches_unwrapped_rollout() {
    let task = make_task("memory-reach", 5).unwrap();
    let agent = small_agent(Variant::Ssm, 4);
    let r = evaluate(&agent, &task, 1.0, 5, &[9]).unwrap();

    let norm = agent.normalizer(task.kind());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    for i in 0..5 {
        let (reset_seed, _) = episode_seeds(9, i);
        let mut s = task.reset(reset_seed);
        let mut b = agent.initial_state();
        for _ in 0..task.spec.horizon {
            let o = mask_observation(task.observe_raw(&s), true).unwrap();
            let (nb, a) = agent
                .step(&norm, &b, &o, ActionMode::Deterministic, &mut rng)
                .unwrap();
            b = nb;
            let out = task.step(&s, &a);
            total += out.reward;
            s = out.state;
            if out.done {
                break;
            }
        }
    }
    assert_eq!(r.mean_return, total / 5.0);
}

#[test]
fn mismatched_agent_rejected() {
    let task = make_task("push", 0).unwrap();
    let agent = small_agent(Variant::Lstm, 4);
    assert!(matches!(
        evaluate(&agent, &task, 1.0, 1, &[0]),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn grid_parsing() {
    let g = parse_grid("0.5:1.0:0.05").unwrap();
    assert_eq!(g.len(), 11);
    assert_eq!(g[0], 0.5);
    assert_eq!(g[2], 0.6);
    assert_eq!(g[10], 1.0);
    assert_eq!(parse_grid("1.0").unwrap(), vec![1.0]);
    assert_eq!(parse_grid("0.7, 1").unwrap(), vec![0.7, 1.0]);
    assert!(parse_grid("0.5:1.5:0.1").is_err());
    assert!(parse_grid("a:b:c").is_err());
    assert!(parse_grid("0.5:1.0:0").is_err());
}

#[test]
fn sweep_needs_full_observability_point() {
    let task = make_task("reach", 0).unwrap();
    assert!(sweep(&[SweepEntry::Expert], &task, &[0.5, 0.9], 2, &[0], 1).is_err());
}

#[test]
fn single_point_sweep_has_zero_degradation() {
    let task = make_task("reach", 0).unwrap();
    let agent = small_agent(Variant::Ssm, 4);
    let entries = [SweepEntry::Expert, SweepEntry::Agent(&agent)];
    let (res, table) = sweep(&entries, &task, &[1.0], 5, &[0], 1).unwrap();
    assert_eq!(res.len(), 2);
    for e in &table.entries {
        if let Some(d) = e.success {
            assert_eq!(d, 0.0);
        }
        if let Some(d) = e.reward {
            assert_eq!(d, 0.0);
        }
    }
    assert_eq!(table.entries[0].success, Some(0.0));
}

#[test]
fn sweep_is_thread_count_invariant() {
    let task = make_task("reach", 0).unwrap();
    let agent = small_agent(Variant::Lstm, 4);
    let entries = [SweepEntry::Agent(&agent), SweepEntry::Expert];
    let grid = parse_grid("0.5:1.0:0.25").unwrap();
    let (a, ta) = sweep(&entries, &task, &grid, 4, &[0, 1], 1).unwrap();
    let (b, tb) = sweep(&entries, &task, &grid, 4, &[0, 1], 3).unwrap();
    let a: Vec<EvalResult> = a.into_iter().map(|r| r.unwrap()).collect();
    let b: Vec<EvalResult> = b.into_iter().map(|r| r.unwrap()).collect();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    assert_eq!(a[0].method, "membot-lstm-full");
    assert_eq!(
        a.iter().map(|r| r.p).collect::<Vec<_>>()[..3],
        [0.5, 0.75, 1.0]
    );
}

#[test]
fn report_files_round_trip() {
    let task = make_task("reach", 0).unwrap();
    let entries = [SweepEntry::Expert];
    let (res, table) = sweep(&entries, &task, &[0.5, 1.0], 6, &[0, 1, 2], 1).unwrap();
    let res: Vec<EvalResult> = res.into_iter().map(|r| r.unwrap()).collect();
    let failed = [FailedCell {
        method: "membot-ssm".into(),
        task: TaskKind::Reach,
        p: 0.5,
    }];
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&res, &table, &failed, dir.path()).unwrap();
    assert_eq!(files.len(), 2 + 4);
    assert!(dir.path().join("plotdata/reach_success_rate.tsv").exists());

    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(text.starts_with(RESULTS_HEADER));
    let rows = parse_results_csv(&text, Path::new("results.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    for (row, r) in rows.iter().zip(&res) {
        assert_eq!(
            (row.method.as_str(), row.task, row.p),
            (r.method.as_str(), r.task, r.p)
        );
        let v = row.values.unwrap();
        let want = [r.success_rate, r.success_std, r.mean_return, r.return_std];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() <= 5e-6 * b.abs().max(1e-300), "{a} vs {b}");
        }
    }
    assert_eq!(rows[2].values, None);

    let again = tempfile::tempdir().unwrap();
    emit_report(&res, &table, &failed, again.path()).unwrap();
    for f in [
        "results.csv",
        "degradation.csv",
        "plotdata/reach_return_degradation.tsv",
    ] {
        assert_eq!(
            std::fs::read(dir.path().join(f)).unwrap(),
            std::fs::read(again.path().join(f)).unwrap()
        );
    }
    let deg = std::fs::read_to_string(dir.path().join("degradation.csv")).unwrap();
    assert!(deg.starts_with(DEGRADATION_HEADER));
    assert!(deg.lines().any(|l| l == "expert,reach,1,0.0,0.0"));
}

#[test]
fn corrupt_results_csv_names_line() {
    let text = format!("{RESULTS_HEADER}\nexpert,reach,1,1,0,1,0\nexpert,reach,zz,1,0,1,0\n");
    match parse_results_csv(&text, Path::new("r.csv")) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}
