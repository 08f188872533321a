#include "ps/cli.hpp"

int main(int argc, char** argv) { return ps::cli::run_command(argc, argv); }
