fn main() {
    armlab::cli::run();
}
