use std::path::Path;

/// Locate a system LAPACK/BLAS pair and emit link directives.
///
/// Search order:
///   1. `EXPPARADIAG_LAPACK_DIR` (explicit directory containing liblapack/libblas)
///   2. the Debian/Ubuntu openblas-pthread layout, which ships a LAPACK
///      interface backed by optimized kernels
///   3. plain `-llapack -lblas` from the default linker path
fn main() {
    println!("cargo:rerun-if-env-changed=EXPPARADIAG_LAPACK_DIR");

    if let Ok(dir) = std::env::var("EXPPARADIAG_LAPACK_DIR") {
        emit(Some(&dir));
        return;
    }

    let candidates = [
        "/usr/lib/x86_64-linux-gnu/openblas-pthread",
        "/usr/lib/aarch64-linux-gnu/openblas-pthread",
        "/usr/lib64/openblas-pthread",
    ];
    for dir in candidates {
        if Path::new(dir).join("liblapack.so").exists()
            || Path::new(dir).join("liblapack.so.3").exists()
        {
            emit(Some(dir));
            return;
        }
    }
    emit(None);
}

fn emit(dir: Option<&str>) {
    if let Some(dir) = dir {
        println!("cargo:rustc-link-search=native={dir}");
        println!("cargo:rustc-link-arg=-Wl,-rpath,{dir}");
    }
    println!("cargo:rustc-link-lib=dylib=lapack");
    println!("cargo:rustc-link-lib=dylib=blas");
}
