use gwt_cli::alloc::CountingAlloc;

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc::new();

fn main() {
    std::process::exit(gwt_cli::run(std::env::args_os(), &ALLOC));
}
