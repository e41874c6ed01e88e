use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use walkdir::WalkDir;

fn main() {
    let manifest = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").unwrap());
    let roots = [manifest.join("../core/src"), manifest.join("src")];
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for root in &roots {
        println!("cargo:rerun-if-changed={}", root.display());
        let label = root.parent().and_then(Path::file_name).unwrap().to_string_lossy().into_owned();
        for entry in WalkDir::new(root).into_iter().filter_map(Result::ok) {
            if entry.file_type().is_file() {
                let rel = entry.path().strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                files.push((format!("{label}/{rel}"), entry.path().to_path_buf()));
            }
        }
    }
    files.sort();

    let mut hasher = Sha256::new();
    for (name, path) in &files {
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
        hasher.update(std::fs::read(path).unwrap());
        hasher.update([0u8]);
    }
    let hex: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    println!("cargo:rustc-env=AIRS_CODE_HASH={hex}");
}
