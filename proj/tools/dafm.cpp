#include "dafm/cli.hpp"

int main(int argc, char** argv) { return dafm::cli::run(argc, argv); }
