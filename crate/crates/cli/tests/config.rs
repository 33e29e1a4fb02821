use std::io::Write;

use metalab_cli::{CliError, RunConfig};

fn pairs(kv: &[(&str, &str)]) -> Vec<(String, String)> {
    kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn defaults_mirror_protocol() {
    let cfg = RunConfig::default();
    assert_eq!((cfg.hidden_h, cfg.embed_dim), (96, 128));
    assert_eq!((cfg.lambda, cfg.beta), (0.1, 0.1));
    assert_eq!(cfg.generations(), 5);
    assert_eq!(cfg.loss_gens(), 3);
    cfg.validate().unwrap();
}

#[test]
fn generations_follow_query_count() {
    for (q, g) in [(1, 5), (5, 10), (10, 10), (15, 15)] {
        let cfg = RunConfig::resolve(None, None, &pairs(&[("q_query", &q.to_string())])).unwrap();
        assert_eq!(cfg.generations(), g, "q = {q}");
    }
    let cfg = RunConfig::resolve(None, None, &pairs(&[("q", "15"), ("generations", "4")])).unwrap();
    assert_eq!(cfg.generations(), 4);
    assert_eq!(cfg.loss_gens(), 3);
    let cfg = RunConfig::resolve(None, None, &pairs(&[("generations", "2")])).unwrap();
    assert_eq!(cfg.loss_gens(), 2);
}

#[test]
fn loss_horizon_beyond_generations_is_rejected() {
    let err = RunConfig::resolve(None, None, &pairs(&[("generations", "2"), ("loss_gens", "3")])).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn flags_beat_env_beat_file_beat_defaults() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "# desk run\nseed = 11\nhidden_h = 48\nlr = 0.01\n").unwrap();
    let cfg = RunConfig::resolve(Some(file.path()), None, &[]).unwrap();
    assert_eq!((cfg.seed, cfg.hidden_h, cfg.lr), (11, 48, 0.01));
    assert_eq!(cfg.embed_dim, 128);

    let cfg = RunConfig::resolve(Some(file.path()), Some("23"), &[]).unwrap();
    assert_eq!(cfg.seed, 23);
    assert_eq!(cfg.hidden_h, 48);

    let cfg = RunConfig::resolve(Some(file.path()), Some("23"), &pairs(&[("seed", "5"), ("hidden_h", "32")])).unwrap();
    assert_eq!((cfg.seed, cfg.hidden_h), (5, 32));
}

#[test]
fn bad_keys_and_values_are_config_errors() {
    for kv in [("no_such_key", "1"), ("k_way", "five"), ("k_way", "1"), ("gamma_mode", "cubic"), ("lr", "-1")] {
        let err = RunConfig::resolve(None, None, &pairs(&[kv])).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{kv:?}");
    }
    let err = RunConfig::resolve(None, Some("not-a-number"), &[]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "seed 3").unwrap();
    assert_eq!(RunConfig::resolve(Some(file.path()), None, &[]).unwrap_err().exit_code(), 2);
}

#[test]
fn text_form_round_trips() {
    let cfg = RunConfig::resolve(None, None, &pairs(&[("k", "7"), ("early_stop", "0.9"), ("gamma_mode", "ramp")])).unwrap();
    let mut again = RunConfig::default();
    again.apply_text(&cfg.to_text(), "round trip").unwrap();
    assert_eq!(again.to_text(), cfg.to_text());
    assert_eq!(again.k_way, 7);
}
