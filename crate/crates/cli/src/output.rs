//! Run directories: files are written into a hidden staging directory that
//! is renamed into place once the metadata sidecar is complete.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputFile {
    pub file: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
    pub description: String,
}

#[derive(Debug)]
pub struct OutputDir {
    target: PathBuf,
    staging: PathBuf,
    pub files: Vec<OutputFile>,
}

impl OutputDir {
    /// Refuses to overwrite a non-empty directory.
    pub fn create(target: &Path) -> io::Result<OutputDir> {
        if target.exists() && (!target.is_dir() || fs::read_dir(target)?.next().is_some()) {
            return Err(io::Error::new(
                io::ErrorKind::AlreadyExists,
                format!("output directory {} exists and is not empty", target.display()),
            ));
        }
        let name = target
            .file_name()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no final component"))?
            .to_string_lossy()
            .into_owned();
        let parent = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent)?;
        let staging = parent.join(format!(".{name}.tmp-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir(&staging)?;
        Ok(OutputDir { target: target.to_path_buf(), staging, files: Vec::new() })
    }

    pub fn write_with(
        &mut self,
        name: &str,
        columns: &[&str],
        description: &str,
        body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
    ) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(self.staging.join(name))?);
        body(&mut w)?;
        w.flush()?;
        self.files.push(OutputFile {
            file: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            description: description.to_string(),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, description: &str, value: &T) -> io::Result<()> {
        self.write_with(name, &[], description, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
            writeln!(w)
        })
    }

    /// Writes `metadata.json` and moves the directory into place.
    pub fn finish(mut self, metadata: impl FnOnce(&[OutputFile]) -> serde_json::Value) -> io::Result<PathBuf> {
        self.files.push(OutputFile {
            file: "metadata.json".into(),
            columns: Vec::new(),
            description: "run manifest, configuration echo, status and output index".into(),
        });
        let meta = metadata(&self.files);
        let mut w = BufWriter::new(File::create(self.staging.join("metadata.json"))?);
        serde_json::to_writer_pretty(&mut w, &meta).map_err(io::Error::other)?;
        writeln!(w)?;
        w.flush()?;
        drop(w);
        if self.target.exists() {
            fs::remove_dir(&self.target)?;
        }
        fs::rename(&self.staging, &self.target)?;
        Ok(self.target.clone())
    }

    pub fn discard(self) {
        let _ = fs::remove_dir_all(&self.staging);
    }
}
