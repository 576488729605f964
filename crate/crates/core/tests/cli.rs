use std::path::Path;
use std::process::Command;

const QUICK: &str = r#"
[sweep]
distances = [10.0, 60.0, 250.0]
pulses = [1e10]
mode = "both"

[optimizer]
mu_points = 5
p_pe_points = 5
refine_rounds = 1
refine_points = 3
x_grid_points = 20
x_refine_rounds = 1
x_refine_points = 5
"#;

fn pdqkd(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pdqkd")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn sweep_output_is_reproducible_and_reparses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUICK);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = pdqkd(&["--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());

    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_owned).collect();
    assert_eq!(header, pdqkd::cli::CSV_HEADER);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    // Rows come out finite first, then asymptotic, each by distance.
    assert_eq!(&rows[0][2], "finite");
    assert_eq!(&rows[5][2], "asymptotic");
    assert_eq!(&rows[2][12], "vacuous");
    assert_eq!(&rows[0][12], "ok");
    for row in &rows {
        for field in [0, 1, 8, 9] {
            let text = &row[field];
            let value: f64 = text.parse().unwrap();
            assert_eq!(format!("{value:.16e}"), text);
        }
    }
    // Finite rows never exceed the asymptotic reference at the same distance.
    for i in 0..3 {
        let finite: f64 = rows[i][9].parse().unwrap();
        let asym: f64 = rows[i + 3][9].parse().unwrap();
        assert!(finite <= asym);
    }
}

#[test]
fn csv_matches_library_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), QUICK);
    let cfg = pdqkd::cli::RunConfig::from_toml(QUICK).unwrap();
    let rows = pdqkd::cli::run_sweep(&cfg).unwrap();
    let o = pdqkd(&["--config", &cfg_path]);
    assert!(o.status.success());
    let mut reader = csv::Reader::from_reader(o.stdout.as_slice());
    for (record, row) in reader.records().map(Result::unwrap).zip(&rows) {
        let rate: f64 = record[9].parse().unwrap();
        assert_eq!(rate.to_bits(), row.rate().to_bits());
        if let Some(opt) = &row.optimum {
            let mu: f64 = record[3].parse().unwrap();
            assert_eq!(mu.to_bits(), opt.mu.to_bits());
        }
    }
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUICK);
    let o = pdqkd(&["--config", &cfg, "--mode", "finite", "--sweep", "20:40:20", "--N", "1e9", "--N", "1e11"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.contains(",finite,")));
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    for bad in ["[source]\neta_a = 2.0\n", "[sweep]\nmode = \"sideways\"\n", "[nonsense]\n"] {
        let cfg = write_config(dir.path(), bad);
        let o = pdqkd(&["--config", &cfg]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));
    }
    let o = pdqkd(&["--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let o = pdqkd(&["--sweep", "10:0:5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_with_measured_observables() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{QUICK}\n[observables]\ngain_t = 0.0033785555345960017\ngain_nt = 0.0015977628730059883\nqber_t = 0.0050349516687449605\nqber_nt = 0.0052971284647068886\n"
    );
    let cfg = write_config(dir.path(), &text);
    let o = pdqkd(&["--config", &cfg, "eval", "--mu", "0.5", "--p-pe", "0.2", "--N", "1e12", "--mode", "finite"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut reader = csv::Reader::from_reader(o.stdout.as_slice());
    let row = reader.records().next().unwrap().unwrap();
    assert_eq!(&row[12], "ok");
    assert!(row[9].parse::<f64>().unwrap() > 0.0);

    let o = pdqkd(&["--config", &cfg, "eval", "--mu", "0.5", "--N", "1e12"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn max_distance_reports_each_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{QUICK}\nstep_km = 20.0\nmax_km = 200.0\n"));
    let o = pdqkd(&["--config", &cfg, "max-distance", "--N", "1e10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "N,mode,p_pe,max_distance_km");
    let finite: f64 = lines[1].rsplit(',').next().unwrap().parse().unwrap();
    let asym: f64 = lines[2].rsplit(',').next().unwrap().parse().unwrap();
    assert!(finite > 80.0 && finite <= asym);
}

#[test]
fn verify_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let csv_a = dir.path().join("a.csv");
    let csv_b = dir.path().join("b.csv");
    let a = pdqkd(&["verify", "--seed", "1", "--trials", "500", "--out", csv_a.to_str().unwrap()]);
    let b = pdqkd(&["verify", "--seed", "1", "--trials", "500", "--out", csv_b.to_str().unwrap()]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(std::fs::read(&csv_a).unwrap(), std::fs::read(&csv_b).unwrap());
    let report = String::from_utf8(a.stdout).unwrap();
    assert!(report.contains(pdqkd::oracle::RNG_ALGORITHM));
    assert_eq!(report.lines().filter(|l| l.starts_with("lemma")).count(), 19);
}
