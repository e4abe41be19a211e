//! Live smoke test against a real completion endpoint. Ignored by default:
//!
//! ```text
//! USERSIM_LIVE_ENDPOINT=https://api.example.com/v1 USERSIM_LIVE_MODEL=my-model LLM_API_KEY=... \
//!     cargo test -p usersim-core --test live_smoke -- --ignored
//! ```
//!
//! `USERSIM_LIVE_API` selects `chat` (default) or `completions`.

mod common;

use serde_json::json;
use usersim_core::commands::{read_transcripts, TRANSCRIPTS_FILE};
use usersim_core::config::Overrides;
use usersim_core::Speaker;

#[test]
#[ignore = "needs a live completion endpoint"]
fn three_dialogs_against_live_endpoint() {
    let endpoint = std::env::var("USERSIM_LIVE_ENDPOINT").expect("set USERSIM_LIVE_ENDPOINT");
    let model = std::env::var("USERSIM_LIVE_MODEL").unwrap_or_else(|_| "gpt-3.5-turbo".into());
    let api = std::env::var("USERSIM_LIVE_API").unwrap_or_else(|_| "chat".into());
    let f = common::fixtures();
    let cfg = json!({
        "backend": { "kind": "http_completion", "endpoint": endpoint, "model": model, "api": api },
        "system": { "kind": "mock", "database": f.join("database.json") },
        "shots": { "k": 2, "corpus": f.join("shots_corpus.json") },
        "goals": { "ontology": f.join("ontology.json") },
        "run": { "n_dialogs": 3, "max_turns": 10, "seed": 1, "generation": { "profile": "gpt" } }
    });
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let run = usersim_core::commands::cmd_run(&path, &Overrides { output_dir: Some(tmp.path().into()), ..Default::default() })
        .expect("run completes");

    let records = read_transcripts(&run.dir.join(TRANSCRIPTS_FILE)).unwrap();
    assert_eq!(records.len(), 3);
    for r in &records {
        let dialog = r.to_dialog().unwrap();
        if let Some(first) = dialog.turns().first() {
            assert_eq!(first.speaker, Speaker::User);
        }
        assert!(dialog.turns().windows(2).all(|w| w[0].speaker != w[1].speaker));
    }
    if let Some(t) = &run.result.scores.goal_table {
        for v in [t.compl_rate, t.succ_rate, t.inform_precision, t.inform_recall, t.inform_f1] {
            assert!((0.0..=1.0).contains(&v), "{v}");
        }
    }
}
