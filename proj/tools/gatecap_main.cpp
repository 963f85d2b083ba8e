#include "gatecap/cli.hpp"

int main(int argc, char** argv) { return gatecap::run_cli(argc, argv); }
