use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

/// Files produced by a command, written only after all computation succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, String)>,
}

impl Outputs {
    pub fn add(&mut self, rel: impl Into<PathBuf>, contents: String) {
        self.files.push((rel.into(), contents));
    }

    pub fn extend(&mut self, files: impl IntoIterator<Item = (PathBuf, String)>) {
        self.files.extend(files);
    }

    pub fn write_all(&self, dir: &Path) -> io::Result<()> {
        for (rel, contents) in &self.files {
            write_atomic(&dir.join(rel), contents.as_bytes())?;
        }
        Ok(())
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a truncated file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(parent)?;
    let mut tmp = NamedTempFile::new_in(parent)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// A class name made safe for use as a file stem.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overwrites_in_place() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path().join("a")).unwrap().count(), 1);
    }

    #[test]
    fn stems() {
        assert_eq!(file_stem("anger"), "anger");
        assert_eq!(file_stem("a b/c"), "a_b_c");
    }
}
