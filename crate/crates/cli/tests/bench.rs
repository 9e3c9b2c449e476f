use hcto::copt::Relaxation;
use hcto::scenarios::SampleRanges;
use hcto_cli::bench::{run_bench, summarize, write_csv, BenchRow, BenchSpec, CSV_HEADER};

fn csv_text<T: serde::Serialize>(rows: &[T]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).unwrap();
    String::from_utf8(buf).unwrap()
}

/// CSV with the timing columns blanked.
fn without_timing(text: &str) -> String {
    text.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f[4] = "-";
            f[5] = "-";
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn small() -> BenchSpec {
    BenchSpec { samples: 3, horizons: vec![4], seed: 11, ..BenchSpec::default() }
}

#[test]
fn defaults_are_desk_scale() {
    let s = BenchSpec::default();
    assert_eq!(s.samples, 20);
    assert_eq!(s.horizons, vec![10, 20]);
    assert_eq!(s.time_limit, 60.0);
    assert_eq!(s.step, 0.2);
    assert_eq!(s.ranges, SampleRanges { x: 0.05, y: 0.05, theta: std::f64::consts::FRAC_PI_2 });
    assert_eq!(s.box_size, [0.07, 0.05]);
    assert_eq!(s.options, vec![Relaxation::McCormick, Relaxation::BinaryEncoded(8)]);
    let p = BenchSpec::full_scale();
    assert_eq!((p.samples, p.horizons.clone()), (500, vec![200]));
}

#[test]
fn spec_json_uses_option_names() {
    let s: BenchSpec = serde_json::from_str(r#"{"samples": 4, "options": ["mccormick", "encoded:4", "naive:2"]}"#).unwrap();
    assert_eq!(s.samples, 4);
    assert_eq!(s.options, vec![Relaxation::McCormick, Relaxation::BinaryEncoded(4), Relaxation::NaivePiecewise(2)]);
    assert_eq!(s.horizons, BenchSpec::default().horizons);
    let text = serde_json::to_string(&s).unwrap();
    assert!(text.contains(r#""options":["mccormick","encoded:4","naive:2"]"#));
    assert_eq!(serde_json::from_str::<BenchSpec>(&text).unwrap(), s);
    assert!(serde_json::from_str::<BenchSpec>(r#"{"options": ["simplex"]}"#).is_err());
    assert!(serde_json::from_str::<BenchSpec>(r#"{"sampels": 3}"#).is_err());
}

#[test]
fn invalid_specs_are_refused() {
    let bad = [
        BenchSpec { samples: 0, ..BenchSpec::default() },
        BenchSpec { horizons: vec![], ..BenchSpec::default() },
        BenchSpec { horizons: vec![10, 1], ..BenchSpec::default() },
        BenchSpec { options: vec![], ..BenchSpec::default() },
        BenchSpec { step: 0.0, ..BenchSpec::default() },
        BenchSpec { box_size: [0.07, -0.01], ..BenchSpec::default() },
        BenchSpec { ranges: SampleRanges { x: -0.1, y: 0.0, theta: 0.0 }, ..BenchSpec::default() },
        BenchSpec { time_limit: 0.0, ..BenchSpec::default() },
    ];
    for s in bad {
        assert!(s.validate().is_err(), "{s:?}");
        assert!(run_bench(&s, 1).is_err());
    }
    assert!(BenchSpec::default().validate().is_ok());
}

#[test]
fn seed_fixes_the_samples() {
    let a = small().scenarios();
    assert_eq!(a, small().scenarios());
    let b = BenchSpec { seed: 12, ..small() }.scenarios();
    assert_ne!(a, b);
    let r = SampleRanges::default();
    for s in &a {
        for q in [s.q_start, s.q_goal] {
            assert!(q.x.abs() <= r.x && q.y.abs() <= r.y && q.theta.abs() <= r.theta);
        }
        assert_eq!(s.step, 0.2);
    }
}

#[test]
fn header_matches_golden_file() {
    let golden = include_str!("golden/bench_header.csv");
    assert_eq!(golden.trim_end(), CSV_HEADER);
    let row = BenchRow {
        sample: 0,
        option: "mccormick".into(),
        horizon: 10,
        success: true,
        a1_total_seconds: 1.5,
        a2_copt_fraction: 0.25,
        a3_cuts: 2,
    };
    let text = csv_text(&[row]);
    assert_eq!(text, format!("{CSV_HEADER}\n0,mccormick,10,true,1.5,0.25,2\n"));
}

#[test]
fn repeated_seed_gives_the_same_csv_modulo_timing() {
    let spec = small();
    let a = run_bench(&spec, 1).unwrap();
    let b = run_bench(&spec, 2).unwrap();
    assert_eq!(without_timing(&csv_text(&a)), without_timing(&csv_text(&b)));
    assert_eq!(a.len(), 6);
}

#[test]
fn twenty_samples_give_forty_rows_and_a_summary() {
    let spec = BenchSpec { horizons: vec![10], ..BenchSpec::default() };
    let rows = run_bench(&spec, 0).unwrap();
    assert_eq!(rows.len(), 40);
    let text = csv_text(&rows);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    // same columns whatever the option
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), 7, "{l}");
        assert!(f[1] == "mccormick" || f[1] == "encoded:8");
        assert_eq!(f[2], "10");
        assert!(f[3] == "true" || f[3] == "false");
        f[4].parse::<f64>().unwrap();
        let a2: f64 = f[5].parse().unwrap();
        assert!((0.0..=1.0).contains(&a2));
        f[6].parse::<usize>().unwrap();
    }
    let summary = summarize(&rows);
    assert_eq!(summary.len(), 2);
    assert_eq!(summary[0].option, "mccormick");
    assert_eq!(summary[1].option, "encoded:8");
    assert!(summary.iter().all(|s| s.runs == 20));
    let golden = include_str!("golden/summary_header.csv");
    assert_eq!(csv_text(&summary).lines().next(), Some(golden.trim_end()));
    // cut and success trend on the batch
    assert!(summary[1].mean_a3 <= summary[0].mean_a3);
    assert!(summary[1].success_rate >= summary[0].success_rate);
}
