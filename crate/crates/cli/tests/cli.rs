use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "corpus", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn stochlog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochlog"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn two_plus_zero_prints_exact_probability() {
    let g = corpus("digit_sums.sdcg");
    let o = stochlog(&["prob", "--grammar", &g, "--goal", "e(2)", "--sequence", "[2,+,0]"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("probability: 0.0025\n"), "{out}");
    assert!(out.contains("exact: 1/400"), "{out}");
}

#[test]
fn strategies_print_equal_values() {
    let g = corpus("digit_sums.sdcg");
    let run = |s| json(&stochlog(&["--json", "prob", "--grammar", &g, "--goal", "e(X)", "--sequence", "[1,+,2,+,3]", "--strategy", s]));
    let (sld, slg) = (run("sld"), run("slg"));
    assert_eq!(sld["exact"], slg["exact"]);
    let (a, b) = (sld["probability"].as_f64().unwrap(), slg["probability"].as_f64().unwrap());
    assert!(a > 0.0 && (a - b).abs() <= 1e-15 * a);
    assert_eq!(sld["answers"][0]["answer"], "e(6)");
}

#[test]
fn underivable_sequence_has_probability_zero() {
    let g = corpus("digit_sums.sdcg");
    let o = stochlog(&["--json", "prob", "--grammar", &g, "--goal", "e(X)", "--sequence", "[+,+]"]);
    assert!(o.status.success());
    let v = json(&o);
    assert_eq!(v["probability"].as_f64(), Some(0.0));
    assert_eq!(v["answers"].as_array().map(Vec::len), Some(0));
}

#[test]
fn neural_sum_best_derivation_reads_zero_and_one() {
    let o = stochlog(&[
        "mpd",
        "--grammar",
        &corpus("neural_digit_sums.sdcg"),
        "--models",
        &corpus("neural_digit_sums_models.json"),
        "--goal",
        "e(1)",
        "--sequence",
        "[i0,+,i1]",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("mnist([i0]) = [0]") && out.contains("mnist([i1]) = [1]"), "{out}");
    let p: f64 = out.lines().next().unwrap().trim_start_matches("probability: ").parse().unwrap();
    assert!((p - 0.14).abs() < 1e-12);
}

#[test]
fn singleton_derivation_is_its_own_best() {
    let g = corpus("digit_sums.sdcg");
    let o = stochlog(&["--json", "mpd", "--grammar", &g, "--goal", "e(X)", "--sequence", "[7]"]);
    let v = json(&o);
    assert_eq!(v["answer"], "e(7)");
    assert_eq!(v["trace"].as_array().unwrap().len(), 2);
    assert!((v["probability"].as_f64().unwrap() - 0.05).abs() < 1e-15);
}

#[test]
fn exit_codes_distinguish_failures() {
    let g = corpus("digit_sums.sdcg");
    let none = stochlog(&["mpd", "--grammar", &g, "--goal", "e(X)", "--sequence", "[2,+]"]);
    assert_eq!(none.status.code(), Some(2));
    let bad_goal = stochlog(&["prob", "--grammar", &g, "--goal", "e(X", "--sequence", "[2]"]);
    assert_eq!(bad_goal.status.code(), Some(1));
    let unknown = stochlog(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(1));
    let help = stochlog(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn unregistered_model_is_named() {
    let o = stochlog(&["prob", "--grammar", &corpus("neural_digit_sums.sdcg"), "--goal", "e(X)", "--sequence", "[i0]"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model mnist is not registered"), "{}", stderr(&o));
}

#[test]
fn translation_listing() {
    let o = stochlog(&["translate", "--grammar", &corpus("digit_sums.sdcg")]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("e(N,A,B) :- n(N,A,B), p(0.5).\ne(N,A,D) :- e(N1,A,[+|C]), n(N2,C,D), N is N1+N2, p(0.5).\n"), "{out}");

    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.sdcg");
    std::fs::write(&empty, "").unwrap();
    let o = stochlog(&["translate", "--grammar", empty.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());

    let bad = dir.path().join("bad.sdcg");
    std::fs::write(&bad, "a --> [x].\nb --> [.\n").unwrap();
    let o = stochlog(&["translate", "--grammar", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("at 3:1") || stderr(&o).contains("at 2:"), "{}", stderr(&o));

    let unnormalized = corpus("translation.sdcg");
    assert_eq!(stochlog(&["translate", "--grammar", &unnormalized]).status.code(), Some(1));
    assert!(stochlog(&["translate", "--lenient", "--grammar", &unnormalized]).status.success());
}

#[test]
fn dot_dump_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let dot = dir.path().join("c.dot");
    let o = stochlog(&[
        "prob",
        "--grammar",
        &corpus("digit_sums.sdcg"),
        "--goal",
        "e(2)",
        "--sequence",
        "[2,+,0]",
        "--emit-dot",
        dot.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(dot).unwrap();
    assert!(text.starts_with("digraph"));
    assert!(text.contains("0.1 :: n(2) --> [2]"), "{text}");
}

#[test]
fn train_eval_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("addition");
    let out_s = out.to_str().unwrap();
    let g = corpus("addition.sdcg");
    let gen = stochlog(&["--seed", "3", "generate", "--task", "addition", "--grammar", &g, "--out", out_s, "--epochs", "10"]);
    assert!(gen.status.success(), "{}", stderr(&gen));
    let manifest = out.join("manifest.json");
    let m = manifest.to_str().unwrap();

    let trained = stochlog(&["--json", "train", "--manifest", m]);
    assert!(trained.status.success(), "{}", stderr(&trained));
    let summary = json(&trained);
    assert_eq!(summary["epochs"], 10);
    assert!(summary["metric"].as_f64().unwrap() >= 0.99);
    let history = std::fs::read_to_string(out.join("run/history.csv")).unwrap();
    assert!(history.starts_with("epoch,loss,metric\n"));
    assert_eq!(history.lines().count(), 11);

    let eval = json(&stochlog(&["--json", "eval", "--manifest", m]));
    assert_eq!(eval["metric"], "answer_accuracy");
    assert!(eval["value"].as_f64().unwrap() >= 0.99);

    // The same seed reproduces the checkpoint byte for byte.
    let first = std::fs::read_to_string(out.join("run/checkpoint.txt")).unwrap();
    assert!(stochlog(&["train", "--manifest", m]).status.success());
    assert_eq!(std::fs::read_to_string(out.join("run/checkpoint.txt")).unwrap(), first);

    // Resuming from a checkpoint continues where it left off.
    let saved = dir.path().join("saved.txt");
    std::fs::copy(out.join("run/checkpoint.txt"), &saved).unwrap();
    let resumed = stochlog(&["--json", "train", "--manifest", m, "--params", saved.to_str().unwrap()]);
    assert!(resumed.status.success());
    let history = std::fs::read_to_string(out.join("run/history.csv")).unwrap();
    assert!(history.lines().nth(1).unwrap().starts_with("11,"), "{history}");

    let probe = stochlog(&["--json", "prob", "--manifest", m, "--goal", "addition(X)", "--sequence", "[vec:t0, vec:t1]"]);
    assert!(probe.status.success(), "{}", stderr(&probe));
    assert!((json(&probe)["probability"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn bench_reports_csv() {
    let o = stochlog(&[
        "bench",
        "--grammar",
        &corpus("formulas.sdcg"),
        "--goal",
        "expression(N)",
        "--lengths",
        "1-3",
        "--repeats",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "length,strategy,answers,nodes,wall_ms");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("1,sld,10,") && lines[2].starts_with("1,slg,10,"));
    assert!(lines[5].starts_with("3,sld,95,") && lines[6].starts_with("3,slg,95,"));
}
