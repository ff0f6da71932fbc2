#include "qlft/cli.hpp"

int main(int argc, char** argv) { return qlft::cli::run(argc, argv); }
