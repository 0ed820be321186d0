use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn bttt(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_bttt"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child
        .stdin
        .take()
        .unwrap()
        .write_all(stdin.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn csv_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(String::from)
        .collect()
}

#[test]
fn tournament_writes_one_row_per_ordered_pairing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bttt(
        &[
            "tournament",
            "--agents",
            "minimax,mcts:20,random",
            "--brick",
            "E5",
            "--games",
            "2",
            "--out",
            out,
            "--seed",
            "3",
        ],
        "",
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    let rows = csv_rows(&dir.path().join("results.csv"));
    assert_eq!(
        rows[0],
        "player1,player2,brick,wins1,wins2,games,mean_time1_s,mean_time2_s"
    );
    assert_eq!(rows.len(), 1 + 9);
    assert!(rows.iter().skip(1).all(|r| r.contains(",E5,")));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["base_seed"], 3);
    assert_eq!(manifest["config"]["games"], 2);
    assert_eq!(text(&o.stdout).lines().count(), 10);

    // same seed, same table apart from timings
    let again = tempfile::tempdir().unwrap();
    let o = bttt(
        &[
            "tournament",
            "--agents",
            "minimax,mcts:20,random",
            "--brick",
            "E5",
            "--games",
            "2",
            "--out",
            again.path().to_str().unwrap(),
            "--seed",
            "3",
        ],
        "",
    );
    assert!(o.status.success());
    let tallies = |rows: Vec<String>| -> Vec<String> {
        rows.iter()
            .map(|r| r.split(',').take(6).collect::<Vec<_>>().join(","))
            .collect()
    };
    assert_eq!(
        tallies(rows),
        tallies(csv_rows(&again.path().join("results.csv")))
    );
}

#[test]
fn eval_all_reports_every_square_and_the_total() {
    let dir = tempfile::tempdir().unwrap();
    let o = bttt(
        &[
            "eval-all",
            "--agent",
            "minimax",
            "--opponent",
            "random",
            "--games-per-position",
            "1",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        "",
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    let rows = csv_rows(&dir.path().join("results.csv"));
    assert_eq!(rows.len(), 1 + 49 + 1);
    assert!(rows.last().unwrap().starts_with("minimax,random,all,"));
    assert!(text(&o.stdout).contains("over 49 games"));
}

#[test]
fn bench_prints_mean_time() {
    let dir = tempfile::tempdir().unwrap();
    let o = bttt(
        &[
            "bench",
            "--agents",
            "random,mcts:50",
            "--moves",
            "5",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        "",
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    let out = text(&o.stdout);
    assert!(out.starts_with("agent,moves,mean_s,std_s\n"));
    assert!(out.contains("mcts:50,5,"));
    assert!(dir.path().join("bench.json").exists());
}

#[test]
fn train_honours_pool_and_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"train": {"network": {"filters": 4, "residual_blocks": 1},
                      "search": {"simulations": 4, "noise": true},
                      "iteration": {"memory_target": 120, "batch_size": 16}}}"#,
    )
    .unwrap();
    let run = dir.path().join("run");
    let args = [
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--brick-pool",
        "c3,D4",
        "--iterations",
        "2",
        "--out",
        run.to_str().unwrap(),
    ];
    let o = bttt(&args, "");
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(run.join("iter_0001.ckpt").exists());
    assert!(run.join("iter_0002.ckpt").exists());
    assert!(!run.join("iter_0003.ckpt").exists());
    assert_eq!(
        std::fs::read_to_string(run.join("metrics.jsonl"))
            .unwrap()
            .lines()
            .count(),
        2
    );
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(
        written["iteration"]["brick_pool"],
        serde_json::json!(["C3", "D4"])
    );

    // the fresh checkpoint is a playable agent
    let ckpt = format!("azero:{}:3", run.join("iter_0002.ckpt").display());
    let t = dir.path().join("t");
    let o = bttt(
        &[
            "tournament",
            "--agents",
            &format!("{ckpt},random"),
            "--games",
            "1",
            "--out",
            t.to_str().unwrap(),
        ],
        "",
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    let manifest = std::fs::read_to_string(t.join("manifest.json")).unwrap();
    assert!(manifest.contains("sha256"));
}

#[test]
fn malformed_brick_pool_exits_with_config_code() {
    let o = bttt(&["train", "--brick-pool", "Z9", "--iterations", "1"], "");
    assert_eq!(o.status.code(), Some(2));
    let err = text(&o.stderr);
    assert!(
        err.contains("brick_pool") && err.contains("A-G") && err.contains("1-7"),
        "{err}"
    );
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"tournament": {"agents": ["random", "random"], "rounds": 5}}"#,
    )
    .unwrap();
    let o = bttt(
        &[
            "tournament",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ],
        "",
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("rounds"));
}

#[test]
fn unknown_agent_exits_with_config_code() {
    let o = bttt(&["bench", "--agents", "alphabeta"], "");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_checkpoint_exits_with_its_own_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = bttt(
        &[
            "tournament",
            "--agents",
            "random,azero:/no/such/file.ckpt:10",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        "",
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(!dir.path().join("results.csv").exists());
}

#[test]
fn play_saves_the_game_when_input_ends() {
    let dir = tempfile::tempdir().unwrap();
    let o = bttt(
        &[
            "play",
            "--agent",
            "random",
            "--brick",
            "D4",
            "--human",
            "o",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        "D4\nA1\nA2\n",
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    let out = text(&o.stdout);
    assert!(out.contains("  1 2 3 4 5 6 7"));
    assert!(out.contains("illegal move D4"));
    let saved = std::fs::read_to_string(dir.path().join("games.jsonl")).unwrap();
    let line = saved.lines().next().unwrap();
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    assert_eq!(v["brick"], "D4");
    assert_eq!(v["moves"][0], "A1");
    assert_eq!(v["moves"][2], "A2");
    assert!(v["result"].is_null());
}
