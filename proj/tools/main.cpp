#include "cloudrm/cli.hpp"

int main(int argc, char** argv) { return cloudrm::cli::run_cli(argc, argv); }
