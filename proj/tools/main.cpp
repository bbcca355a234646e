#include "exin/cli.hpp"

int main(int argc, char** argv) { return exin::cli_main(argc, argv); }
