//! Output files are written next to their destination with a `.partial`
//! suffix and renamed only once the whole command has succeeded, so a failed
//! run leaves its partial results behind under the suffixed names.

use std::path::{Path, PathBuf};

use pcinpaint::Error;

#[derive(Default)]
pub struct Outputs {
    pending: Vec<(PathBuf, PathBuf)>,
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".partial");
    PathBuf::from(name)
}

impl Outputs {
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), Error> {
        let partial = partial_path(path);
        std::fs::write(&partial, bytes).map_err(|e| Error::Io {
            path: partial.clone(),
            source: e,
        })?;
        self.pending.push((partial, path.to_path_buf()));
        Ok(())
    }

    pub fn commit(self) -> Result<(), Error> {
        for (from, to) in self.pending {
            std::fs::rename(&from, &to).map_err(|e| Error::Io {
                path: to,
                source: e,
            })?;
        }
        Ok(())
    }
}
