#include "unetsurv/cli.hpp"

int main(int argc, char** argv) { return unetsurv::cli::run(argc, argv); }
