use std::fs;
use std::path::{Path, PathBuf};

use crate::{CliError, CliResult};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| {
        CliError::Core(stochlod::Error::File {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

/// Runs `f` in a staging directory next to `root/name` and moves it into
/// place on success. On failure the staging directory is removed and any
/// earlier `root/name` is left untouched.
pub fn staged<F>(root: &Path, name: &str, f: F) -> CliResult<PathBuf>
where
    F: FnOnce(&Path) -> CliResult<()>,
{
    fs::create_dir_all(root).map_err(io_err(root))?;
    let staging = root.join(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
    }
    fs::create_dir(&staging).map_err(io_err(&staging))?;
    if let Err(e) = f(&staging) {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    let target = root.join(name);
    if target.exists() {
        fs::remove_dir_all(&target).map_err(io_err(&target))?;
    }
    fs::rename(&staging, &target).map_err(io_err(&target))?;
    Ok(target)
}
