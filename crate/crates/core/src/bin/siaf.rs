// SPDX-License-Identifier: Apache-2.0

use clap::Parser;

fn main() {
    siaf_core::cli::init_logging();
    let cli = siaf_core::cli::Cli::parse();
    std::process::exit(siaf_core::cli::run(cli));
}
