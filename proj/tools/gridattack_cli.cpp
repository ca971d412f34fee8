#include "gridattack/cli.hpp"

int main(int argc, char** argv) { return gridattack::cli_dispatch(argc, argv); }
