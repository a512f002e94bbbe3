#include "nbseg/cli.hpp"

int main(int argc, char** argv) { return nbseg::cli::run(argc, argv); }
