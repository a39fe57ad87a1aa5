use std::ffi::{CStr, CString};
use std::ptr;

use persona_debate_ffi::*;

fn last_error() -> String {
    let p = pd_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { pd_string_free(p) };
    s
}

fn paper_set() -> *mut PdTallySet {
    let mut set = ptr::null_mut();
    assert_eq!(unsafe { pd_tallies_from_paper(&mut set) }, PdStatus::Ok);
    set
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(pd_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn paper_tallies_round_trip() {
    let set = paper_set();
    unsafe {
        assert_eq!(pd_tallies_len(set), 18);
        let mut cell = PdCell::default();
        assert_eq!(pd_tallies_get(set, 0, &mut cell), PdStatus::Ok);
        assert_eq!((cell.agent_a, cell.agent_b), (4, 5));
        assert_eq!(cell.counts, [38, 14, 10, 2]);
        let mut topic = ptr::null_mut();
        assert_eq!(pd_tallies_topic(set, 0, &mut topic), PdStatus::Ok);
        assert_eq!(take_string(topic), "HIV");

        assert_eq!(pd_tallies_get(set, 18, &mut cell), PdStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));
        pd_tallies_free(set);
    }
}

#[test]
fn triads_with_buffer_protocol() {
    let set = paper_set();
    unsafe {
        let mut count = 0usize;
        assert_eq!(pd_tallies_triads(set, ptr::null_mut(), 0, &mut count), PdStatus::BufferTooSmall);
        assert_eq!(count, 1);
        let mut buf = [0u32; 3];
        assert_eq!(pd_tallies_triads(set, buf.as_mut_ptr(), 1, &mut count), PdStatus::Ok);
        assert_eq!(buf, [4, 5, 6]);
        pd_tallies_free(set);
    }
}

#[test]
fn cell_statistics() {
    let counts = [38u64, 14, 10, 2];
    let (mut a, mut b) = (0.0, 0.0);
    unsafe {
        assert_eq!(pd_cell_mle(counts.as_ptr(), &mut a, &mut b), PdStatus::Ok);
        assert_eq!((a, b), (0.625, 0.25));
        let mut g = -1.0;
        assert_eq!(pd_g_statistic(counts.as_ptr(), a, b, &mut g), PdStatus::Ok);
        assert!(g >= 0.0);

        let mut dist = [0.0f64; 4];
        assert_eq!(pd_cell_distribution(0.6, 0.2, dist.as_mut_ptr()), PdStatus::Ok);
        for (x, want) in dist.iter().zip([0.48, 0.08, 0.32, 0.12]) {
            assert!((x - want).abs() < 1e-12);
        }

        let empty = [0u64; 4];
        assert_eq!(pd_cell_mle(empty.as_ptr(), &mut a, &mut b), PdStatus::MissingData);
        assert_eq!(pd_cell_distribution(1.5, 0.2, dist.as_mut_ptr()), PdStatus::InvalidArgument);
        assert_eq!(pd_cell_mle(ptr::null(), &mut a, &mut b), PdStatus::NullPointer);
        assert!(last_error().contains("counts"));
    }
}

#[test]
fn fit_handle() {
    let set = paper_set();
    unsafe {
        let mut fit = ptr::null_mut();
        assert_eq!(pd_fit(set, &mut fit), PdStatus::Ok);
        assert!(pd_fit_log_likelihood(fit).is_finite());
        assert!(pd_fit_converged(fit));
        let mut json = ptr::null_mut();
        assert_eq!(pd_fit_to_json(fit, &mut json), PdStatus::Ok);
        let value: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
        assert_eq!(value["cells"].as_array().unwrap().len(), 18);
        pd_fit_free(fit);
        pd_tallies_free(set);
        assert!(pd_fit_log_likelihood(ptr::null()).is_nan());
    }
}

#[test]
fn run_and_reload_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "repetitions = 2\nparallelism = 2\n").unwrap();
    let config = CString::new(config.to_str().unwrap()).unwrap();
    let out = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    unsafe {
        let mut manifest = ptr::null_mut();
        assert_eq!(pd_run(config.as_ptr(), out.as_ptr(), &mut manifest), PdStatus::Ok);
        let manifest: serde_json::Value = serde_json::from_str(&take_string(manifest)).unwrap();
        assert_eq!(manifest["counts"]["completed"], 15 * 6 * 2);

        let jsonl = CString::new(dir.path().join("out/transcripts.jsonl").to_str().unwrap()).unwrap();
        let mut set = ptr::null_mut();
        assert_eq!(pd_tallies_from_jsonl(jsonl.as_ptr(), &mut set), PdStatus::Ok);
        assert_eq!(pd_tallies_len(set), 90);
        pd_tallies_free(set);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let missing = CString::new("/nonexistent/transcripts.jsonl").unwrap();
        let mut set = ptr::null_mut();
        assert_eq!(pd_tallies_from_jsonl(missing.as_ptr(), &mut set), PdStatus::Io);
        assert!(set.is_null());

        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.jsonl");
        std::fs::write(&bad, "{not json}\n").unwrap();
        let bad = CString::new(bad.to_str().unwrap()).unwrap();
        assert_eq!(pd_tallies_from_jsonl(bad.as_ptr(), &mut set), PdStatus::Parse);
        assert!(last_error().contains(":1:"), "{}", last_error());

        assert_eq!(pd_tallies_from_paper(ptr::null_mut()), PdStatus::NullPointer);
        let bad_config = dir.path().join("bad.toml");
        std::fs::write(&bad_config, "repetitions = 0\n").unwrap();
        let bad_config = CString::new(bad_config.to_str().unwrap()).unwrap();
        let mut manifest = ptr::null_mut();
        assert_eq!(pd_run(bad_config.as_ptr(), ptr::null(), &mut manifest), PdStatus::InvalidArgument);
        assert!(last_error().contains("repetitions"));

        // freeing NULL is a no-op
        pd_tallies_free(ptr::null_mut());
        pd_fit_free(ptr::null_mut());
        pd_string_free(ptr::null_mut());
    }
}
