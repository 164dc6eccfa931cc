fn main() {
    println!("cargo::rustc-check-cfg=cfg(acceptance_runner)");
    println!("cargo::rustc-cfg=acceptance_runner");
}
