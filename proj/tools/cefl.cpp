#include "cefl/cli.hpp"

int main(int argc, char** argv) { return cefl::cli_main(argc, argv); }
