#include "kgperturb/cli.hpp"

int main(int argc, char** argv) { return kgp::cli::run(argc, argv); }
