use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").expect("manifest dir");
    let out = PathBuf::from(env::var("OUT_DIR").expect("out dir")).join("cdqc.h");
    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            bindings.write_to_file(&out);
            // Keep the checked-in header in sync for downstream consumers.
            let committed = PathBuf::from(&crate_dir).join("include").join("cdqc.h");
            if let Some(parent) = committed.parent() {
                let _ = std::fs::create_dir_all(parent);
            }
            bindings.write_to_file(&committed);
        }
        Err(e) => {
            println!("cargo:warning=cbindgen failed: {e}");
        }
    }
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
