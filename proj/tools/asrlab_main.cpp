#include "asrlab/cli.hpp"

int main(int argc, char** argv) { return asrlab::run_cli(argc, argv); }
