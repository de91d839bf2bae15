#include "lipdse/cli.hpp"

int main(int argc, char** argv) { return lipdse::cli::run_main(argc, argv); }
