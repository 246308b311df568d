use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uav_cloudlet::models::{
    evaluate, BitAllocation, COMPUTE_OFFSET, DOWNLINK_OFFSET, UPLINK_OFFSET,
};
use uav_cloudlet::scenario::load_scenario;

fn scenario_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uav-cloudlet"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn csv_records(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(str::to_string).collect())
        .collect();
    (headers, rows)
}

fn column(headers: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = headers.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn reference() -> String {
    scenario_file("reference.json")
        .to_str()
        .unwrap()
        .to_string()
}

#[test]
fn solve_reference_csv() {
    let o = run(&["solve", "--scenario", &reference()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (headers, rows) = csv_records(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(
        headers,
        [
            "slot",
            "distance_m",
            "uplink_bits",
            "compute_bits",
            "downlink_bits",
            "mobile_j",
            "cloudlet_j"
        ]
    );
    assert_eq!(rows.len(), 50);
    let uplink = column(&headers, &rows, "uplink_bits");
    let distance = column(&headers, &rows, "distance_m");
    assert_eq!(uplink.iter().filter(|&&u| u > 0.0).count(), 48);
    assert_eq!(&uplink[48..], &[0.0, 0.0]);

    // The uplink peak sits at the closest approach among uplink slots.
    let argmax = (0..48)
        .max_by(|&i, &j| uplink[i].total_cmp(&uplink[j]))
        .unwrap();
    let closest = distance[..48].iter().copied().fold(f64::INFINITY, f64::min);
    assert!(
        distance[argmax] <= closest * (1.0 + 1e-12),
        "peak at slot {}",
        argmax + 1
    );
}

#[test]
fn csv_round_trips_through_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("slots.csv");
    let json_path = dir.path().join("solution.json");
    let p = |x: &Path| x.to_str().unwrap().to_string();
    assert_eq!(
        code(&run(&[
            "solve",
            "--scenario",
            &reference(),
            "--out",
            &p(&csv_path)
        ])),
        0
    );
    assert_eq!(
        code(&run(&[
            "solve",
            "--scenario",
            &reference(),
            "--format",
            "json",
            "--out",
            &p(&json_path)
        ])),
        0
    );

    let (headers, rows) = csv_records(&std::fs::read_to_string(&csv_path).unwrap());
    let s = load_scenario(scenario_file("reference.json")).unwrap();
    let m = s.usable_slots();
    let take = |name: &str, offset: usize| {
        column(&headers, &rows, name)[offset - 1..offset - 1 + m].to_vec()
    };
    let alloc = BitAllocation {
        uplink: take("uplink_bits", UPLINK_OFFSET),
        compute: take("compute_bits", COMPUTE_OFFSET),
        downlink: take("downlink_bits", DOWNLINK_OFFSET),
    };
    let r = evaluate(&s, &alloc).unwrap();

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(json["status"], "converged");
    let primal = json["primal_value_j"].as_f64().unwrap();
    assert!((r.mobile_uplink_j.total - primal).abs() <= 1e-9 * primal);
    let mobile_sum: f64 = column(&headers, &rows, "mobile_j").iter().sum();
    assert!((mobile_sum - primal).abs() <= 1e-9 * primal);
    assert_eq!(json["allocation"]["uplink"]["slots"][0], 1);
    assert_eq!(json["allocation"]["downlink"]["slots"][0], 3);
}

#[test]
fn exit_codes() {
    let o = run(&["solve", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(code(&o), 1);
    assert!(!o.stderr.is_empty());

    let tiny = scenario_file("tiny_budget.json");
    assert_eq!(
        code(&run(&["solve", "--scenario", tiny.to_str().unwrap()])),
        2
    );
    assert_eq!(
        code(&run(&[
            "solve",
            "--scenario",
            &reference(),
            "--max-iters",
            "1"
        ])),
        3
    );

    let hover = scenario_file("hovering.json");
    assert_eq!(
        code(&run(&["compare", "--scenario", hover.to_str().unwrap()])),
        0
    );
}

#[test]
fn invalid_scenario_lists_every_violation() {
    let text = std::fs::read_to_string(scenario_file("reference.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["application"]["output_ratio"] = (-0.5).into();
    doc["channel"]["bandwidth_hz"] = 0.into();
    let file = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(file.path(), doc.to_string()).unwrap();
    let o = run(&["solve", "--scenario", file.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(
        err.contains("output_ratio") && err.contains("bandwidth"),
        "{err}"
    );
}

#[test]
fn deadline_sweep_keeps_order_and_inverse_square_law() {
    let o = run(&[
        "sweep",
        "--scenario",
        &reference(),
        "--param",
        "deadline_s",
        "--values",
        "5,1,3,2,4",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (headers, rows) = csv_records(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(
        headers,
        [
            "param",
            "mobile_exec_j",
            "equal_alloc_j",
            "optimal_j",
            "status"
        ]
    );
    let t = column(&headers, &rows, "param");
    assert_eq!(t, [5.0, 1.0, 3.0, 2.0, 4.0]);
    let exec = column(&headers, &rows, "mobile_exec_j");
    for i in 1..t.len() {
        let law = exec[0] * (t[0] / t[i]).powi(2);
        assert!((exec[i] - law).abs() <= 1e-12 * law);
    }
    let status: Vec<&str> = rows.iter().map(|r| r[4].as_str()).collect();
    assert_eq!(
        status,
        [
            "converged",
            "infeasible",
            "infeasible",
            "infeasible",
            "infeasible"
        ]
    );
    assert!(rows[1][3].is_empty());
    let optimal: f64 = rows[0][3].parse().unwrap();
    assert!(optimal < exec[0]);
}

#[test]
fn velocity_sweep_and_failure_exit() {
    let o = run(&[
        "sweep",
        "--scenario",
        &reference(),
        "--param",
        "velocity_scale",
        "--values",
        "1,0,-1",
    ]);
    assert_eq!(code(&o), 0);
    let (headers, rows) = csv_records(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(column(&headers, &rows, "param"), [1.0, 0.0, -1.0]);
    assert!(rows.iter().all(|r| r[4] == "converged"));

    let o = run(&[
        "sweep",
        "--scenario",
        &reference(),
        "--param",
        "deadline_s",
        "--values",
        "1,2,0.05",
    ]);
    assert_eq!(code(&o), 1);
    let (_, rows) = csv_records(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(rows[2][4], "error");
    assert!(!o.stderr.is_empty());
}
