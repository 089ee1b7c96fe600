//! Byte-exact solution CSVs for the bundled examples. Set
//! `JR_UPDATE_GOLDEN=1` to rewrite them.

use std::path::Path;

use jordan_reduce::cli::cmd_solve;
use jordan_reduce::probspec::Overrides;

#[test]
fn examples_match_golden_csv() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let update = std::env::var_os("JR_UPDATE_GOLDEN").is_some();
    let mut mismatched = Vec::new();
    for i in 1..=5 {
        let (_, csv) = cmd_solve(
            &root.join(format!("problems/example{i}.json")),
            &Overrides::default(),
        )
        .unwrap();
        let golden = root.join(format!("tests/golden/example{i}.csv"));
        if update {
            std::fs::create_dir_all(golden.parent().unwrap()).unwrap();
            std::fs::write(&golden, &csv).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&golden).expect("golden file present");
        if want != csv {
            let line = want
                .lines()
                .zip(csv.lines())
                .position(|(a, b)| a != b)
                .map_or("length".to_string(), |n| format!("line {}", n + 1));
            mismatched.push(format!("example{i} ({line})"));
        }
    }
    assert!(mismatched.is_empty(), "differs: {}", mismatched.join(", "));
}
