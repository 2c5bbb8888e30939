mod common;

use common::*;
use outcrop_core::texgen::{default_templates, generate, Family};
use outcrop_core::ImageBuffer;

fn score_of(line: &str) -> f64 {
    line.split_whitespace()
        .find_map(|t| t.strip_prefix("score="))
        .unwrap()
        .parse()
        .unwrap()
}

fn write_tex(dir: &std::path::Path, name: &str, family: Family, seed: u64) -> String {
    let t = default_templates(64, 12)
        .into_iter()
        .find(|t| t.family == family)
        .unwrap();
    let path = dir.join(name);
    std::fs::write(&path, generate(&t.with_seed(seed)).unwrap().to_png()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn compare_self_and_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let s1 = write_tex(dir.path(), "s1.png", Family::Stripes, 1);
    let s2 = write_tex(dir.path(), "s2.png", Family::Stripes, 2);
    let n = write_tex(dir.path(), "n.png", Family::Noise, 3);

    let o = run(&["compare", &s1, &s1]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("score=100.0000"), "{}", stdout(&o));

    let same = score_of(&stdout(&run(&["compare", &s1, &s2])));
    let other = score_of(&stdout(&run(&["compare", &s1, &n])));
    assert!(other < same, "{other} vs {same}");
}

#[test]
fn compare_formats_and_threshold_sources() {
    let dir = tempfile::tempdir().unwrap();
    let s1 = write_tex(dir.path(), "s1.png", Family::Stripes, 1);
    let s2 = write_tex(dir.path(), "s2.png", Family::Stripes, 2);
    let score = score_of(&stdout(&run(&["compare", &s1, &s2])));
    assert!(score > 1.0 && score < 99.0, "{score}");
    let below = format!("{:.4}", score - 0.5);
    let above = format!("{:.4}", score + 0.5);

    let verdict = |cmd: &mut std::process::Command| {
        let v: serde_json::Value = serde_json::from_slice(&cmd.output().unwrap().stdout).unwrap();
        v["verdict"].as_str().unwrap().to_string()
    };
    assert_eq!(
        verdict(
            outcrop()
                .args(["compare", &s1, &s2, "--format", "json"])
                .env("OUTCROP_THRESHOLD", &below)
        ),
        "similar"
    );
    assert_eq!(
        verdict(
            outcrop()
                .args(["compare", &s1, &s2, "--format", "json"])
                .env("OUTCROP_THRESHOLD", &above)
        ),
        "novel"
    );
    // an explicit flag wins over the environment
    assert_eq!(
        verdict(
            outcrop()
                .args(["compare", &s1, &s2, "--format", "json", "--threshold", &below])
                .env("OUTCROP_THRESHOLD", &above)
        ),
        "similar"
    );

    let tsv = stdout(&run(&["compare", &s1, &s2, "--format", "tsv"]));
    let lines: Vec<_> = tsv.lines().collect();
    assert_eq!(lines[0], "raw\tbaseline\tscore\tverdict");
    assert_eq!(lines[1].split('\t').count(), 4);

    let tb = run(&["compare", &s1, &s2, "--juxtapose", "tb"]);
    assert_eq!(code(&tb), 0);
}

#[test]
fn compare_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let s1 = write_tex(dir.path(), "s1.png", Family::Stripes, 1);
    let short = dir.path().join("short.png");
    std::fs::write(&short, ImageBuffer::filled(64, 20, [3, 4, 5]).unwrap().to_png()).unwrap();
    let short = short.to_str().unwrap();
    let junk = dir.path().join("junk.png");
    std::fs::write(&junk, b"not a png").unwrap();
    let tiny = dir.path().join("tiny.png");
    std::fs::write(&tiny, ImageBuffer::filled(2, 2, [3, 4, 5]).unwrap().to_png()).unwrap();

    assert_eq!(code(&run(&["compare", &s1, short])), 3);
    assert_eq!(code(&run(&["compare", &s1, short, "--resize", "64x64"])), 0);
    assert_eq!(code(&run(&["compare", &s1, junk.to_str().unwrap()])), 2);
    assert_eq!(code(&run(&["compare", &s1, "/nonexistent/x.png"])), 2);
    assert_eq!(
        code(&run(&["compare", tiny.to_str().unwrap(), tiny.to_str().unwrap()])),
        5
    );
    assert_eq!(code(&run(&["compare", &s1, &s1, "--threshold", "150"])), 1);
    assert_eq!(code(&run(&["compare", &s1])), 64);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn ingest_lines_pairs_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_tex(dir.path(), "a.png", Family::Checker, 1);
    let b = write_tex(dir.path(), "b.png", Family::Nodules, 2);
    let sess = dir.path().join("sess");
    let sess = sess.to_str().unwrap();

    let o = run(&["ingest", "--session", sess, "--new", &a]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "1 a.png NOVEL score=0.0000 best=-\n");

    let o = run(&["ingest", "--session", sess, &b, &a]);
    let lines: Vec<_> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("2 b.png NOVEL"), "{}", lines[0]);
    assert_eq!(lines[1], "3 a.png SIMILAR score=100.0000 best=1");
    assert!(dir.path().join("sess/pairs/0003.png").is_file());
    assert!(!dir.path().join("sess/pairs/0001.png").exists());

    assert_ne!(code(&run(&["ingest", "--session", sess, "--new", &a])), 0);
    assert_eq!(
        code(&run(&[
            "ingest",
            "--session",
            dir.path().join("none").to_str().unwrap(),
            &a
        ])),
        4
    );

    let tsv = stdout(&run(&["ingest", "--session", sess, &b, "--format", "tsv"]));
    assert_eq!(
        tsv,
        "id\tname\tverdict\tscore\tbest_match_id\n4\tb.png\tsimilar\t100.0000\t2\n"
    );

    // labels naming a truth class feed the report's accuracy lines
    assert_eq!(code(&run(&["label", "--session", sess, "3", "similar"])), 0);
    assert_eq!(code(&run(&["label", "--session", sess, "9", "similar"])), 1);
    let report = stdout(&run(&["report", "--session", sess]));
    assert!(
        report.contains("Accuracy of Similarity detection: 1/1 = 100%"),
        "{report}"
    );
    let report = stdout(&run(&["report", "--session", sess, "--threshold", "99.99"]));
    assert!(
        report.contains("Accuracy of Similarity detection: 1/1 = 100%"),
        "{report}"
    );
}

#[test]
fn default_corpus_ingest_golden() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_corpus(dir.path(), &[]);
    let images = corpus_images(&manifest);
    assert_eq!(images.len(), 32);
    let sess = dir.path().join("sess");
    let mut args = vec!["ingest", "--session", sess.to_str().unwrap(), "--new"];
    args.extend(images.iter().map(String::as_str));
    let out = stdout(&run(&args));
    assert_eq!(out.lines().count(), 32);
    // frozen from the reference run at the default threshold of 40
    assert_eq!(out.lines().filter(|l| l.contains(" NOVEL ")).count(), 24);
    assert_eq!(out.lines().filter(|l| l.contains(" SIMILAR ")).count(), 8);
}

#[test]
fn eval_outputs() {
    let o = run(&["eval", "--counts", "9,3,2,5,31,4"]);
    assert_eq!(
        stdout(&o),
        "Accuracy of Novelty detection: 9/14 = 64%\n\
         Accuracy of Similarity detection: 31/34 = 91%\n\
         Accuracy of Difference detection: 2/6 = 33%\n\
         Overall accuracy: 42/54 = 78%\n"
    );

    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_corpus(dir.path(), &[]);
    let out = dir.path().join("report.tsv");
    let o = run(&[
        "eval",
        manifest.to_str().unwrap(),
        "--format",
        "tsv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let golden = include_str!("golden/default_corpus_t40.tsv");
    assert_eq!(std::fs::read_to_string(&out).unwrap(), golden);
    for line in golden.lines() {
        assert_eq!(line.split('\t').count(), 6, "{line}");
    }

    // without truth labels the records print but accuracies do not
    let text = std::fs::read_to_string(&manifest).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for img in v["images"].as_array_mut().unwrap() {
        img.as_object_mut().unwrap().remove("truth");
    }
    std::fs::write(&manifest, serde_json::to_string(&v).unwrap()).unwrap();
    let report = stdout(&run(&["eval", manifest.to_str().unwrap()]));
    assert_eq!(report.lines().count(), 2 + 32);
    assert!(!report.contains("Accuracy"));
}

#[test]
fn eval_manifest_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("corpus.json");
    std::fs::write(&bad, r#"{"version": 9, "images": []}"#).unwrap();
    assert_eq!(code(&run(&["eval", bad.to_str().unwrap()])), 4);
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&run(&["eval", bad.to_str().unwrap()])), 4);
    assert_eq!(
        code(&run(&["eval", dir.path().join("missing.json").to_str().unwrap()])),
        4
    );
}

#[test]
fn serve_answers_raw_http() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(&dir.path().join("sessions"));
    let created = http(
        server.addr,
        "POST",
        "/sessions",
        "application/json",
        br#"{"threshold": 40}"#,
    );
    assert_eq!(created.status, 201);
    let id = created.json()["session_id"].as_str().unwrap().to_string();
    assert!(dir.path().join("sessions").join(&id).join("manifest.json").is_file());
}
