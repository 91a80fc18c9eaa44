use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fractal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fractal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn simulate_universe(dir: &Path) {
    for i in 0..4 {
        for (h, tag) in [(0.5, "A"), (0.7, "B")] {
            let out = dir.join(format!("{tag}{i}.csv"));
            let volume = format!("{}", if tag == "A" { 1e6 } else { 1e3 } * (i + 1) as f64);
            let seed = format!("{}", 40 + i);
            let st = fractal(&[
                "simulate",
                "--hurst",
                &h.to_string(),
                "--seed",
                &seed,
                "--volume",
                &volume,
                "--out",
                out.to_str().unwrap(),
            ]);
            assert!(
                st.status.success(),
                "{}",
                String::from_utf8_lossy(&st.stderr)
            );
        }
    }
}

#[test]
fn simulate_writes_a_loadable_series() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim.csv");
    let st = fractal(&[
        "simulate",
        "--n",
        "789",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 791);
    assert_eq!(lines[0], "date,price,volume");
    assert_eq!(lines[1], "2018-01-06,100,1000000");

    let stats = fractal(&["stats", "--input", out.to_str().unwrap()]);
    assert!(stats.status.success());
    let table = String::from_utf8(stats.stdout).unwrap();
    assert!(
        table.contains("Crypto,Obs.,Mean,Median,Min,Max,Std. Dev.,Skewness,Kurtosis,Jarque-Bera")
    );
    assert!(table.contains("\nsim,789,"));
}

#[test]
fn cascade_length_must_be_a_power_of_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c.csv");
    let st = fractal(&[
        "simulate",
        "--kind",
        "binomial_cascade",
        "--n",
        "1000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(1));
    let st = fractal(&[
        "simulate",
        "--kind",
        "binomial_cascade",
        "--n",
        "1024",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(st.status.success());
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(fractal(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fractal(&["stats"]).status.code(), Some(1));
    assert_eq!(
        fractal(&["surrogate", "--input", "x", "--measures", "delta_q"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(fractal(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "nonsense = 1\n").unwrap();
    let st = fractal(&[
        "ghe",
        "--input",
        "missing.csv",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("unknown key"));
}

#[test]
fn missing_input_is_a_data_error() {
    let st = fractal(&["stats", "--input", "/nonexistent/universe.csv"]);
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn analysis_subcommands_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    fs::create_dir_all(&input).unwrap();
    simulate_universe(&input);
    let inp = input.to_str().unwrap();

    let ghe_out = tmp.path().join("ghe");
    assert!(
        fractal(&["ghe", "--input", inp, "--out", ghe_out.to_str().unwrap()])
            .status
            .success()
    );
    assert!(ghe_out.join("ghe_hurst.csv").exists() && ghe_out.join("ghe_qhq.json").exists());
    assert!(!ghe_out.join("ghe_qhq_by_quartile.csv").exists());

    let curve_out = tmp.path().join("curve");
    assert!(fractal(&[
        "ghe",
        "--input",
        inp,
        "--q",
        "0.5,1,2,3",
        "--curve",
        "--out",
        curve_out.to_str().unwrap(),
    ])
    .status
    .success());
    let curve = fs::read_to_string(curve_out.join("ghe_qhq_by_quartile.csv")).unwrap();
    let body: Vec<&str> = curve.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "Quartile,q,qH(q),Obs.");
    assert_eq!(body.len(), 1 + 4 * 4);
    assert!(body[1].starts_with("Quartile 1,0.5,") && body[1].ends_with(",2"));
    let hurst = fs::read_to_string(curve_out.join("ghe_hurst.csv")).unwrap();
    assert!(!hurst.contains("NaN"));
    assert_eq!(
        fractal(&["ghe", "--input", inp, "--q", "0.5,1"])
            .status
            .code(),
        Some(1)
    );

    let mf_out = tmp.path().join("mf");
    assert!(
        fractal(&["mfdfa", "--input", inp, "--out", mf_out.to_str().unwrap()])
            .status
            .success()
    );
    assert_eq!(fs::read_dir(&mf_out).unwrap().count(), 8);

    let one = fractal(&["mfdfa", "--input", inp, "--ticker", "B2"]);
    assert!(one.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&one.stdout).unwrap();
    assert_eq!(doc["ticker"], "B2");
    assert_eq!(doc["config"]["detrend_order"], 1);
    for key in [
        "h_of_q",
        "tau_of_q",
        "alpha",
        "f_alpha",
        "delta_h",
        "delta_alpha",
        "fit_r2",
    ] {
        assert!(!doc["result"][key].is_null(), "{key}");
    }
    assert_eq!(
        fractal(&["mfdfa", "--input", inp, "--ticker", "ZZ"])
            .status
            .code(),
        Some(2)
    );

    let sur_out = tmp.path().join("sur");
    let st = fractal(&[
        "surrogate",
        "--input",
        inp,
        "--n",
        "100",
        "--seed",
        "4",
        "--measures",
        "delta_h",
        "--out",
        sur_out.to_str().unwrap(),
    ]);
    assert!(
        st.status.success(),
        "{}",
        String::from_utf8_lossy(&st.stderr)
    );
    assert!(sur_out.join("surrogate_delta_h.csv").exists());
    assert!(!sur_out.join("surrogate_delta_alpha.csv").exists());
    let t2 = fs::read_to_string(sur_out.join("table2_quartiles.csv")).unwrap();
    assert!(t2.contains("Quartile,Delta H,Delta H_shuffled,Delta alpha,Delta alpha_shuffled,Obs."));
    let rows = fs::read_to_string(sur_out.join("surrogate_delta_h.csv")).unwrap();
    assert!(rows.contains("Crypto,Delta H,Delta H_shuffled,CL_0.025,CL_0.975,Significant"));
}

#[test]
fn pipeline_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    fs::create_dir_all(&input).unwrap();
    simulate_universe(&input);
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "surrogate.n_shuffles = 100\nbenchmark_runs = 2\n").unwrap();
    let out = tmp.path().join("report");
    let st = fractal(&[
        "pipeline",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "9",
        "--config",
        cfg.to_str().unwrap(),
        "--emit-figures",
    ]);
    assert!(
        st.status.success(),
        "{}",
        String::from_utf8_lossy(&st.stderr)
    );
    assert!(out.join("manifest.json").exists());
    assert!(out
        .join("figures")
        .join("qhq_shuffled_by_quartile.csv")
        .exists());
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"n_shuffles\": 100"));
    assert!(manifest.contains("\"seed\": 9"));

    let flat = tmp.path().join("flat");
    fs::create_dir_all(&flat).unwrap();
    for i in 0..4 {
        let mut text = String::from("date,price,volume\n");
        let start = chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        for day in start.iter_days().take(400) {
            text.push_str(&format!("{day},7,{}\n", 100 * (i + 1)));
        }
        fs::write(flat.join(format!("F{i}.csv")), text).unwrap();
    }
    let st = fractal(&[
        "pipeline",
        "--input",
        flat.to_str().unwrap(),
        "--out",
        tmp.path().join("flat_out").to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(3));
}
