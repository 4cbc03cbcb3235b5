// Retraining allocates and frees many same-sized matrices per epoch; glibc
// returns those to the kernel and faults them back in every time.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() {
    std::process::exit(nac::cli::main_with_args(std::env::args_os()));
}
