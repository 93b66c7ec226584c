//! All-or-nothing writes into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Files collected in memory and written only by [`Staged::commit`].
///
/// Each file lands through a temporary sibling and a rename, so readers never
/// see a truncated file. Names are plain file names; nothing is written outside
/// the output directory.
#[derive(Debug, Default)]
pub struct Staged {
    files: Vec<(String, Vec<u8>)>,
}

impl Staged {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        assert!(
            !name.is_empty() && !name.contains(['/', '\\']) && name != "." && name != "..",
            "output names are plain file names"
        );
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_jsonl<T: Serialize>(&mut self, name: &str, records: impl IntoIterator<Item = T>) {
        let mut bytes = Vec::new();
        for r in records {
            serde_json::to_writer(&mut bytes, &r).expect("records serialize");
            bytes.push(b'\n');
        }
        self.add(name, bytes);
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
        bytes.push(b'\n');
        self.add(name, bytes);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes every staged file into `dir`, creating it if needed. On failure
    /// the temporaries written so far are removed.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let io = |stage: &str, e: std::io::Error| CliError::Stage {
            stage: "write".into(),
            message: format!("{stage}: {e}"),
        };
        fs::create_dir_all(dir).map_err(|e| io(&dir.display().to_string(), e))?;
        let mut temps = Vec::new();
        for (name, bytes) in &self.files {
            let tmp = dir.join(format!(".{name}.tmp"));
            if let Err(e) = fs::write(&tmp, bytes) {
                let _ = fs::remove_file(&tmp);
                for (t, _) in &temps {
                    let _ = fs::remove_file(t);
                }
                return Err(io(&tmp.display().to_string(), e));
            }
            temps.push((tmp, dir.join(name)));
        }
        let mut written = Vec::new();
        for (tmp, target) in temps {
            fs::rename(&tmp, &target).map_err(|e| io(&target.display().to_string(), e))?;
            written.push(target);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_writes_everything_and_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("nested");
        let mut s = Staged::new();
        s.add("a.txt", b"hello".to_vec());
        s.add_jsonl("b.jsonl", [1, 2]);
        s.commit(&out).unwrap();
        assert_eq!(fs::read_to_string(out.join("a.txt")).unwrap(), "hello");
        assert_eq!(fs::read_to_string(out.join("b.jsonl")).unwrap(), "1\n2\n");
        let names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 2);
    }

    #[test]
    #[should_panic(expected = "plain file names")]
    fn refuses_paths() {
        Staged::new().add("../escape", Vec::new());
    }
}
