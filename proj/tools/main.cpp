#include "cli.hpp"

int main(int argc, char** argv) { return tactile::cli::run(argc, argv); }
