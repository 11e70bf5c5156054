#include "dupdist/cli.hpp"

int main(int argc, char** argv) { return dupdist::cli::run_cli(argc, argv); }
