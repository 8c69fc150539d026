fn main() {
    // BLAS/LAPACK kernels (zgemm, zgetrf/zgetrs, zheev, zgeev) come from the
    // system OpenBLAS, which bundles LAPACK on this platform.
    println!("cargo:rustc-link-lib=dylib=openblas");
}
