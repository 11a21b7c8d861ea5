#include "pkground/cli.hpp"

int main(int argc, char** argv) { return pkground::cli_main(argc, argv); }
