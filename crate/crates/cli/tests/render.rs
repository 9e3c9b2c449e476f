use hcto::qopt::Trajectory;
use hcto::scenarios::{resting_box, BOX_H, BOX_MASS};
use hcto::Scenario;
use hcto_cli::render::{render_svg, snapshot_steps, PX_PER_M, PX_PER_N};

/// Resting box held by table forces only, `horizon + 1` steps.
fn still(s: &Scenario) -> Trajectory {
    let steps = s.horizon + 1;
    let q = [0.0, BOX_H / 2.0, 0.0];
    let half = BOX_MASS * 9.81 / 2.0;
    Trajectory {
        poses: vec![q; steps],
        rates: vec![[0.0; 3]; steps],
        robot_positions: vec![vec![[0.0, BOX_H]]; steps],
        robot_rates: vec![vec![[0.0; 2]]; steps],
        surfaces: vec![vec![2]; steps],
        alpha: vec![vec![0.035]; steps],
        lambda: vec![vec![[0.0; 2]]; steps],
        u: vec![vec![[0.0; 2]]; steps],
        f: vec![vec![[0.0, half], [0.0, half], [0.0; 2], [0.0; 2]]; steps],
        contact: vec![vec![true, true, false, false]; steps],
        halfspace: vec![vec![0; 4]; steps],
        eps: 0.0,
        objective: 0.0,
    }
}

fn parse(svg: &str) -> roxmltree::Document<'_> {
    roxmltree::Document::parse(svg).expect("well-formed XML")
}

fn count(doc: &roxmltree::Document, class: &str) -> usize {
    doc.descendants().filter(|n| n.attribute("class").is_some_and(|c| c.split(' ').any(|x| x == class))).count()
}

#[test]
fn ten_snapshots_of_fifty_steps() {
    let s = resting_box(50);
    let svg = render_svg(&s, &still(&s), 10);
    let doc = parse(&svg);
    assert_eq!(count(&doc, "snapshot"), 10);
    assert_eq!(count(&doc, "goal"), 1);
    let steps: Vec<usize> = doc
        .descendants()
        .filter_map(|n| n.attribute("data-step"))
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(steps.first(), Some(&0));
    assert_eq!(steps.last(), Some(&50));
}

#[test]
fn one_snapshot_is_the_final_frame() {
    let s = resting_box(7);
    let doc_text = render_svg(&s, &still(&s), 1);
    let doc = parse(&doc_text);
    assert_eq!(count(&doc, "snapshot"), 1);
    let frame = doc.descendants().find(|n| n.attribute("class") == Some("frame")).unwrap();
    assert_eq!(frame.attribute("data-step"), Some("7"));
    assert_eq!(frame.attribute("opacity"), Some("1.000"));
}

#[test]
fn opacity_ramps_up() {
    let s = resting_box(20);
    let svg = render_svg(&s, &still(&s), 5);
    let doc = parse(&svg);
    let ops: Vec<f64> = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("frame"))
        .map(|n| n.attribute("opacity").unwrap().parse().unwrap())
        .collect();
    assert_eq!(ops.len(), 5);
    assert!(ops.windows(2).all(|w| w[0] < w[1]));
    assert!((ops[4] - 1.0).abs() < 1e-12);
}

#[test]
fn arrows_follow_the_force_scale() {
    let s = resting_box(2);
    let svg = render_svg(&s, &still(&s), 1);
    let doc = parse(&svg);
    let arrows: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("force env-force")).collect();
    assert_eq!(arrows.len(), 2);
    let half = BOX_MASS * 9.81 / 2.0;
    for a in arrows {
        let g = |k: &str| a.attribute(k).unwrap().parse::<f64>().unwrap();
        // upward force points up the page
        assert!((g("y1") - g("y2") - half * PX_PER_N).abs() < 0.01);
        assert_eq!(g("x1"), g("x2"));
        assert!((g("y1")).abs() < 0.01);
        assert!((g("x1").abs() - 0.035 * PX_PER_M).abs() < 0.01);
    }
    // the idle robot is drawn hollow, without an arrow
    assert_eq!(count(&doc, "robot"), 1);
    assert_eq!(count(&doc, "loaded"), 0);
}

#[test]
fn snapshot_steps_are_spread_evenly() {
    assert_eq!(snapshot_steps(51, 10), vec![0, 6, 11, 17, 22, 28, 33, 39, 44, 50]);
    assert_eq!(snapshot_steps(4, 1), vec![3]);
    assert_eq!(snapshot_steps(3, 10), vec![0, 1, 2]);
    assert!(snapshot_steps(0, 3).is_empty());
    for steps in 1..40 {
        for n in 1..=steps {
            let v = snapshot_steps(steps, n);
            assert_eq!(v.len(), n);
            assert_eq!(*v.last().unwrap(), steps - 1);
            assert!(v.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
