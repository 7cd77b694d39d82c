fn main() {
    planecycle::cli::main()
}
