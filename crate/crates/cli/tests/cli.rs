use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nldamp_core::CSV_HEADER;

const BASE: &str = r#"
name = "cli-test"
inits = [[1.0, 0.0], [-0.5, 2.0]]

[system]
kind = "tracking"
k = 100.0
mu = 1e-4

[integrator]
dt = 1e-3
t_end = 0.5

[reference]
kind = "slope"
v = 1.0

[outputs]
csv = "run"
plotdata = "run/plot.csv"
"#;

fn nldamp(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nldamp"))
        .env_remove("NLDAMP_OUT_DIR")
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_scenario(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_strict(path: &Path) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .unwrap();
    let header = rdr.headers().unwrap().clone();
    let rows = rdr.records().collect::<Result<Vec<_>, _>>().unwrap();
    (header, rows)
}

#[test]
fn simulate_writes_strict_csv_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), BASE);
    let out = nldamp(tmp.path(), &["simulate", &scenario]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    for i in 0..2 {
        let (header, rows) = read_strict(&tmp.path().join(format!("run/tracking_init{i}.csv")));
        assert_eq!(header.iter().collect::<Vec<_>>().join(","), CSV_HEADER);
        assert_eq!(rows.len(), 501);
        for row in &rows {
            for field in row {
                field.parse::<f64>().unwrap();
            }
        }
    }
    let (header, rows) = read_strict(&tmp.path().join("run/plot.csv"));
    assert_eq!(&header[0], "label");
    assert!(!rows.is_empty());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("run/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["scenario_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["runs"][0]["terminated"], "completed");
}

#[test]
fn overrides_change_the_scenario_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), BASE);
    let hash = |extra: &[&str]| {
        let mut args = vec!["simulate", scenario.as_str()];
        args.extend_from_slice(extra);
        assert_eq!(nldamp(tmp.path(), &args).status.code(), Some(0));
        let text = fs::read_to_string(tmp.path().join("run/manifest.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["scenario_sha256"].as_str().unwrap().to_string()
    };
    let plain = hash(&[]);
    assert_eq!(plain, hash(&[]));
    assert_ne!(plain, hash(&["--k", "50"]));
}

#[test]
fn malformed_scenario_exits_1_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), &BASE.replace("dt = 1e-3", "dt = \"fast\""));
    let out = nldamp(tmp.path(), &["simulate", &scenario]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains("line") && msg.contains("dt"), "{msg}");
}

#[test]
fn invalid_values_exit_1_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    for (from, to, field) in [
        ("inits = [[1.0, 0.0], [-0.5, 2.0]]", "inits = []", "inits"),
        ("dt = 1e-3", "dt = -1e-3", "integrator"),
        ("mu = 1e-4", "mu = -1.0", "system"),
        ("v = 1.0", "", "reference.v"),
    ] {
        let scenario = write_scenario(tmp.path(), &BASE.replace(from, to));
        let out = nldamp(tmp.path(), &["simulate", &scenario]);
        assert_eq!(out.status.code(), Some(1), "{to}");
        assert!(stderr(&out).contains(field), "{}", stderr(&out));
    }
    assert_eq!(
        nldamp(tmp.path(), &["simulate", "/no/such/file.toml"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn divergence_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let text = BASE.replace("t_end = 0.5", "t_end = 0.5\nblowup_bound = 0.5");
    let scenario = write_scenario(tmp.path(), &text);
    let out = nldamp(tmp.path(), &["simulate", &scenario]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(tmp.path().join("run/tracking_init0.csv").exists());
}

#[test]
fn compare_requires_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), BASE);
    let out = nldamp(tmp.path(), &["compare", &scenario]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("baseline"));

    let with_baseline = format!("{BASE}\n[baseline]\nkind = \"pd\"\nkp = 100.0\n");
    let scenario = write_scenario(tmp.path(), &with_baseline);
    let out = nldamp(tmp.path(), &["compare", &scenario]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (header, rows) = read_strict(&tmp.path().join("run/compare.csv"));
    assert_eq!(header.len(), 9);
    assert_eq!(rows.len(), 4);
}

#[test]
fn sweep_labels_runs_by_gain() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), &format!("{BASE}\n[sweep]\nk = [4.0, 9.0]\n"));
    let out = nldamp(tmp.path(), &["sweep", &scenario]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(tmp.path().join("run/k4_init1.csv").exists());
    assert!(tmp.path().join("run/k9_init0.csv").exists());
}

#[test]
fn certify_reports_and_rejects_bad_gains() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nldamp(
        tmp.path(),
        &[
            "certify", "--k", "100", "--mu", "1e-4", "--e1", "-1:1:21", "--e2", "-1:1:21",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("max quadform = 0 on e2=0; negative elsewhere"),
        "{text}"
    );
    assert!(text.contains("matched coefficient: 0.5"), "{text}");
    let (header, rows) = read_strict(&tmp.path().join("certificate.csv"));
    assert_eq!(header.len(), 7);
    assert_eq!(rows.len(), (21 + 50) * 21);

    assert_eq!(
        nldamp(tmp.path(), &["certify", "--mu", "-1"]).status.code(),
        Some(1)
    );
    assert_eq!(
        nldamp(tmp.path(), &["certify", "--e1", "1:-1:5"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn figure_names_are_checked() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nldamp(tmp.path(), &["figure", "fig9"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("fig1"));
    let out = nldamp(tmp.path(), &["figure", "fig3"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (header, rows) = read_strict(&tmp.path().join("fig3/energy_rate.csv"));
    assert_eq!(header.iter().collect::<Vec<_>>(), ["e1", "e2", "abs_vdot"]);
    assert_eq!(rows.len(), 201 * 201);
}

#[test]
fn out_dir_defaults_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), BASE);
    let target = tmp.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_nldamp"))
        .env("NLDAMP_OUT_DIR", &target)
        .args(["simulate", &scenario])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(target.join("run/manifest.json").exists());
}
