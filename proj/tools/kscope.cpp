#include "kscope/cli.hpp"

int main(int argc, char** argv) { return kscope::cli::run(argc, argv); }
