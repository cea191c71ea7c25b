//! Acceptance checks, one line of output per criterion.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use mcf_core::acquisition::{ingest_cloud_log, parse_app_inventory, AppStatus};
use mcf_core::case::{correlate, CaseParams};
use mcf_core::correlation::{detect_uninstall_evidence, Confidence, FindingKind, LinkTier};
use mcf_core::preservation::{seal_bundle, verify_bundle, IsolationMethod};
use mcf_core::sim::{generate_case, inject_tamper, SimParams, SplitMix64};
use mcf_core::{
    estimate_clock_skew, ingest_device_dump, match_synced_artifacts, resolve_ip, Locale, Verdict,
};

fn golden() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden")
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn golden_fixture() -> Result<String, String> {
    let dump = ingest_device_dump(&golden().join("bundle")).map_err(|e| e.to_string())?;
    let p = &dump.device;
    let profile = (
        p.model.as_deref(),
        p.android_version.as_deref(),
        p.sdk_level.as_deref(),
        p.brand.as_deref(),
        p.manufacturer.as_deref(),
    );
    check(
        profile
            == (
                Some("LG-D802"),
                Some("4.4.2"),
                Some("19"),
                Some("lge"),
                Some("LGE"),
            ),
        || format!("profile {profile:?}"),
    )?;
    let (apps, ledger) = parse_app_inventory(&dump);
    check(ledger.is_empty(), || format!("ledger {ledger:?}"))?;
    let iso = |a: &mcf_core::AppRecord| {
        a.installed_at
            .as_ref()
            .map(|t| t.to_iso())
            .unwrap_or_default()
    };
    let installed: Vec<(String, String)> = apps
        .iter()
        .filter(|a| a.status == AppStatus::All)
        .map(|a| (a.app_name.clone(), iso(a)))
        .collect();
    let expected: Vec<(String, String)> = [
        ("AirDroid", "2015-12-05T22:29:41Z"),
        ("Sheets", "2015-12-16T23:58:23Z"),
        ("LinkedIn", "2016-01-08T18:13:27Z"),
        ("ButtonTest", "2016-05-10T16:51:11Z"),
        ("Instagram", "2016-04-06T14:33:53Z"),
        ("TestTest", "2016-05-10T17:06:37Z"),
    ]
    .iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    check(installed == expected, || format!("installed {installed:?}"))?;
    let uninstalled: Vec<(String, Option<String>, String)> = apps
        .iter()
        .filter(|a| a.status == AppStatus::Uninstalled)
        .map(|a| (a.app_name.clone(), a.package.clone(), iso(a)))
        .collect();
    let want = vec![(
        "OSFunctionEnable".to_string(),
        Some("com.example.ccs.osfunctionenable".to_string()),
        "2016-05-10T17:51:13Z".to_string(),
    )];
    check(uninstalled == want, || {
        format!("uninstalled {uninstalled:?}")
    })?;
    check(apps.len() == 7, || format!("{} apps", apps.len()))?;
    Ok("profile and 6+1 apps match exactly".into())
}

fn golden_uninstall() -> Result<String, String> {
    let dump = ingest_device_dump(&golden().join("bundle")).map_err(|e| e.to_string())?;
    let log = ingest_cloud_log(&golden().join("cloud_log.jsonl")).map_err(|e| e.to_string())?;
    let corr = correlate(&dump, Some(&log), CaseParams::default());
    let found: Vec<_> = corr
        .findings
        .iter()
        .filter(|f| f.kind == FindingKind::AppUsedThenUninstalled)
        .collect();
    check(found.len() == 1, || {
        format!("{} uninstall findings", found.len())
    })?;
    check(found[0].confidence == Confidence::High, || {
        format!("{:?}", found[0].confidence)
    })?;
    check(
        found[0].subject == "com.example.ccs.osfunctionenable",
        || found[0].subject.clone(),
    )?;
    let (apps, _) = parse_app_inventory(&dump);
    check(
        detect_uninstall_evidence(&apps, &log.events).len() == 1,
        || "direct detection disagrees".into(),
    )?;
    Ok(format!("{} High", found[0].finding_id))
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            let b = fs::read(&p).unwrap();
            (p, b)
        })
        .collect();
    v.sort();
    v
}

fn restore(snap: &[(PathBuf, Vec<u8>)]) {
    for (p, b) in snap {
        fs::write(p, b).unwrap();
    }
}

fn tamper_detection() -> Result<String, String> {
    let tmp = tempfile::tempdir().unwrap();
    let mut mutations = 0;
    let mut intact = 0;
    for case_seed in 0..20u64 {
        let c = generate_case(
            &SimParams {
                seed: 1000 + case_seed,
                ..SimParams::default()
            },
            &tmp.path().join(case_seed.to_string()),
        )
        .map_err(|e| e.to_string())?;
        seal_bundle(
            &c.bundle_dir,
            "acceptance",
            IsolationMethod::ShieldedContainer,
            Locale::DayFirst,
        )
        .map_err(|e| e.to_string())?;
        let original = snapshot(&c.bundle_dir);
        let (_, r) = verify_bundle(&c.bundle_dir).map_err(|e| e.to_string())?;
        check(r.verdict == Verdict::Intact, || {
            format!("case {case_seed} not intact")
        })?;
        intact += 1;
        for m in 0..50u64 {
            let outcome =
                inject_tamper(&c.bundle_dir, case_seed * 1_000 + m).map_err(|e| e.to_string())?;
            let (_, r) = verify_bundle(&c.bundle_dir).map_err(|e| e.to_string())?;
            check(
                r.verdict == Verdict::Tampered
                    && r.first_divergent_index == Some(outcome.tamper_index),
                || {
                    format!(
                        "case {case_seed} mutation {m}: {r:?} expected index {}",
                        outcome.tamper_index
                    )
                },
            )?;
            mutations += 1;
            restore(&original);
            let (_, r) = verify_bundle(&c.bundle_dir).map_err(|e| e.to_string())?;
            check(r.verdict == Verdict::Intact, || {
                format!("case {case_seed} not intact after restore")
            })?;
            intact += 1;
        }
    }
    Ok(format!(
        "{mutations} mutations located, {intact} intact checks"
    ))
}

fn skew_recovery() -> Result<String, String> {
    let tmp = tempfile::tempdir().unwrap();
    let jitter = 2;
    let mut trials = 0;
    let mut worst = 0;
    for skew in [-3600i64, -300, 0, 300, 3600] {
        for seed in 0..100u64 {
            let params = SimParams {
                seed,
                skew_seconds: skew,
                sync_lag_max_s: jitter,
                n_uploads: 5 + (seed % 6) as usize,
                n_messages: 3,
                n_calls: 2,
                ..SimParams::default()
            };
            let root = tmp.path().join(format!("{skew}-{seed}"));
            let c = generate_case(&params, &root).map_err(|e| e.to_string())?;
            let dump = ingest_device_dump(&c.bundle_dir).map_err(|e| e.to_string())?;
            let log = ingest_cloud_log(&c.cloud_log).map_err(|e| e.to_string())?;
            let est =
                estimate_clock_skew(&dump.records, &log.events, 3).map_err(|e| e.to_string())?;
            let err = (est.offset_seconds - skew).abs();
            check(err <= jitter, || {
                format!("skew {skew} seed {seed}: estimated {}", est.offset_seconds)
            })?;
            worst = worst.max(err);
            trials += 1;
            fs::remove_dir_all(&root).ok();
        }
    }
    Ok(format!("{trials} trials, worst error {worst} s"))
}

fn correlation_oracle() -> Result<String, String> {
    let tmp = tempfile::tempdir().unwrap();
    let mut checked_exact = 0;
    let mut rng = SplitMix64::new(2024);
    for seed in 0..200u64 {
        let digest_logging = seed % 4 != 3;
        let params = SimParams {
            seed,
            n_apps: rng.below(7) as usize,
            n_uploads: 1 + rng.below(20) as usize,
            n_logins: rng.below(4) as usize,
            skew_seconds: rng.range_i64(-900, 900),
            sync_lag_max_s: 1 + rng.range_i64(0, 120),
            digest_logging,
            ..SimParams::default()
        };
        let root = tmp.path().join(seed.to_string());
        let c = generate_case(&params, &root).map_err(|e| e.to_string())?;
        let dump = ingest_device_dump(&c.bundle_dir).map_err(|e| e.to_string())?;
        let log = ingest_cloud_log(&c.cloud_log).map_err(|e| e.to_string())?;
        check(log.events.len() <= 50, || {
            format!("seed {seed}: {} events", log.events.len())
        })?;
        let corr = correlate(&dump, Some(&log), CaseParams::default());
        let brute = common::brute_force_links(
            &dump.records,
            &log.events,
            &corr.skew,
            CaseParams::default().window_seconds,
        );
        check(corr.links == brute, || {
            format!("seed {seed}: greedy {:?} vs brute {:?}", corr.links, brute)
        })?;
        let direct = match_synced_artifacts(&dump.records, &log.events, &corr.skew, 300);
        check(direct == corr.links, || {
            format!("seed {seed}: pipeline and matcher disagree")
        })?;
        if digest_logging {
            let got: BTreeSet<(String, String)> = corr
                .links
                .iter()
                .filter(|l| l.tier == LinkTier::ExactDigest)
                .map(|l| (l.device_record_id.clone(), l.cloud_event_id.clone()))
                .collect();
            let truth: BTreeSet<(String, String)> =
                c.ground_truth.true_links.iter().cloned().collect();
            let tp = got.intersection(&truth).count();
            check(tp == got.len() && tp == truth.len(), || {
                format!(
                    "seed {seed}: precision {}/{}, recall {}/{}",
                    tp,
                    got.len(),
                    tp,
                    truth.len()
                )
            })?;
            checked_exact += 1;
        }
        fs::remove_dir_all(&root).ok();
    }
    Ok(format!("200 cases equal brute force; precision = recall = 1.0 on {checked_exact} digest-logged cases"))
}

fn mcf(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mcf"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let root = tmp.path().join("case");
    mcf(&[
        "simulate",
        "--out",
        &s(&root),
        "--seed",
        "77",
        "--n-logins",
        "3",
    ])?;
    let bundle = s(&root.join("bundle"));
    let geo = s(&root.join("geo_table.csv"));
    let log = root.join("cloud_log.jsonl");

    let permuted_dir = tmp.path().join("permuted");
    fs::create_dir_all(&permuted_dir).unwrap();
    let mut lines: Vec<String> = common::read_lines(&log);
    let mut rng = SplitMix64::new(5);
    for i in (1..lines.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        lines.swap(i, j);
    }
    check(lines != common::read_lines(&log), || {
        "permutation is the identity".into()
    })?;
    let permuted = permuted_dir.join("cloud_log.jsonl");
    fs::write(
        &permuted,
        lines.iter().map(|l| format!("{l}\n")).collect::<String>(),
    )
    .unwrap();

    let mut reports = Vec::new();
    for (name, log_path) in [("a", &log), ("b", &log), ("c", &permuted)] {
        let out = tmp.path().join(name);
        mcf(&[
            "run-all",
            &bundle,
            "--out",
            &s(&out),
            "--cloud-log",
            &s(log_path),
            "--geo-table",
            &geo,
            "--case-id",
            "D",
        ])?;
        reports.push(fs::read(out.join("D.report.json")).unwrap());
    }
    check(reports[0] == reports[1], || "two runs differ".into())?;
    check(reports[0] == reports[2], || {
        "permuted cloud log changes the report".into()
    })?;
    Ok(format!(
        "{} report bytes identical across 2 runs and a permuted log",
        reports[0].len()
    ))
}

fn losslessness() -> Result<String, String> {
    let tmp = tempfile::tempdir().unwrap();
    let mut files = 0;
    for seed in 0..50u64 {
        let c = generate_case(
            &SimParams {
                seed,
                ..SimParams::default()
            },
            &tmp.path().join(seed.to_string()),
        )
        .map_err(|e| e.to_string())?;
        files += common::assert_lossless(&c.bundle_dir, &c.cloud_log);
        common::corrupt_case(&c.bundle_dir, &c.cloud_log);
        files += common::assert_lossless(&c.bundle_dir, &c.cloud_log);
    }
    files += common::assert_lossless(&golden().join("bundle"), &golden().join("cloud_log.jsonl"));
    Ok(format!("{files} files balanced (records + ledger = lines)"))
}

fn geo_oracle() -> Result<String, String> {
    let table = common::synthetic_geo_table(1000, 11);
    let lo = (table.ranges()[0].start & 0xffff_ffff) as u32;
    let hi = (table.ranges()[999].end & 0xffff_ffff) as u32;
    let mut rng = SplitMix64::new(8);
    let mut hits = 0;
    for _ in 0..10_000 {
        let v = lo.saturating_sub(5_000) as u64 + rng.below(u64::from(hi - lo) + 10_000);
        let ip = std::net::Ipv4Addr::from(v as u32).to_string();
        let got = resolve_ip(&ip, &table).map(|g| (g.country, g.city));
        let want = common::geo_linear(&ip, table.ranges());
        check(got == want, || format!("{ip}: {got:?} vs {want:?}"))?;
        hits += usize::from(want.is_some());
    }
    Ok(format!("10000 queries agree ({hits} hits)"))
}

type Criterion = fn() -> Result<String, String>;

fn main() -> ExitCode {
    let criteria: [(&str, Duration, Criterion); 8] = [
        ("1 golden fixture", Duration::from_secs(1), golden_fixture),
        (
            "2 uninstall evidence",
            Duration::from_secs(1),
            golden_uninstall,
        ),
        (
            "3 tamper detection",
            Duration::from_secs(60),
            tamper_detection,
        ),
        ("4 skew recovery", Duration::from_secs(30), skew_recovery),
        (
            "5 correlation oracle equivalence",
            Duration::from_secs(60),
            correlation_oracle,
        ),
        ("6 determinism", Duration::from_secs(10), determinism),
        ("7 ingestion losslessness", Duration::MAX, losslessness),
        ("8 geo lookup oracle", Duration::from_secs(5), geo_oracle),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > budget => {
                Err(format!("{detail}; took {elapsed:.2?}, budget {budget:.0?}"))
            }
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS criterion {name}: {detail} ({elapsed:.2?})"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why} ({elapsed:.2?})");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
