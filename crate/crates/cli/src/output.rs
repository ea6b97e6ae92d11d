//! Artifact files, written atomically through a temporary sibling.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use cvar_gap::Result;

pub struct Artifacts {
    dir: Option<PathBuf>,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d)?;
        }
        Ok(Artifacts { dir: dir.map(Path::to_path_buf), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let target = dir.join(name);
        let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(contents.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &target)?;
        self.written.push(target);
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn written(&self) -> Vec<String> {
        self.written.iter().map(|p| p.display().to_string()).collect()
    }
}

/// Pretty JSON on stdout; a closed pipe is not an error.
pub fn print_json(doc: &serde_json::Value) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(doc).expect("plain data"));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_only_with_a_directory() {
        let mut none = Artifacts::new(None).unwrap();
        none.write("x.txt", "hi").unwrap();
        assert!(none.written().is_empty());

        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("a/b");
        let mut some = Artifacts::new(Some(&nested)).unwrap();
        some.write("x.txt", "one").unwrap();
        some.write("x.txt", "two").unwrap();
        assert_eq!(fs::read_to_string(nested.join("x.txt")).unwrap(), "two");
        assert_eq!(fs::read_dir(&nested).unwrap().count(), 1);
    }
}
