extern crate cbindgen;

use std::env;
use std::path::Path;

fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let crate_dir = env::var("CARGO_MANIFEST_DIR").unwrap();
    let header_dir = Path::new(&crate_dir).join("include");
    std::fs::create_dir_all(&header_dir).ok();

    match cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(cbindgen::Config::from_file(Path::new(&crate_dir).join("cbindgen.toml")).unwrap_or_default())
        .generate()
    {
        Ok(bindings) => {
            bindings.write_to_file(header_dir.join("mieval.h"));
        }
        Err(e) => {
            // don't break the build when header generation fails; the
            // library itself is still usable from Rust
            println!("cargo:warning=cbindgen failed: {e}");
        }
    }
}
