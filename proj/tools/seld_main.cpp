#include "seld/cli.hpp"

int main(int argc, char** argv) { return seld::cli_main(argc, argv); }
