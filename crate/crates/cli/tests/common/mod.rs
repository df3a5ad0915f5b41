#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const HONEST: &str = "\
[election]
seed = 41
pseudonym_width = 6

[candidates]
0 = Alice
1 = Bob

[layout]
precincts = 20
voters_per_precinct = 500
precincts_per_cluster = 5
fan_out = 2
preferences = 0.52,0.48
";

pub const SMALL: &str = "\
[election]
seed = 5
pseudonym_width = 6

[candidates]
0 = Alice
1 = Bob
2 = Carol

[layout]
precincts = 6
voters_per_precinct = 40
precincts_per_cluster = 2
fan_out = 2
";

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

pub fn sfv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfv"))
        .env_remove("SFV_OUT_DIR")
        .arg("--dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Value of a `key=value` line.
pub fn field(text: &str, key: &str) -> Option<String> {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .map(str::to_string)
}
